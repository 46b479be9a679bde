/* Copyright (c) 2026 The wsiseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "wsiseg/error.hpp"
#include "wsiseg/inference.hpp"
#include "wsiseg/metrics.hpp"

using namespace wsiseg;
using wsiseg::testing::TempDir;

namespace {

ArchitectureSpec tiny_spec(bool classifier) {
  ArchitectureSpec spec;
  spec.input_px = 32;
  spec.stage_widths = {4, 4, 6, 6, 8};
  spec.decoder_widths = {6, 6, 4, 4, 4};
  spec.classifier = classifier;
  return spec;
}

SlideLevelData random_slide(std::uint64_t seed, int w, int h) {
  Rng rng(seed);
  RgbImage raster(w, h);
  BinaryMask ann(w, h, 0, MaskRole::kAnnotation);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto* px = raster.pixel(x, y);
      const bool tumour = (x / 16 + y / 16) % 3 == 0;
      for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(40 + rng.below(191));
      if (tumour) ann.set(x, y, 1);
    }
  SlidePyramid slide;
  slide.slide_id = "r" + std::to_string(seed);
  slide.levels.push_back(PyramidLevel{0, 3.89, w, h, "", 512});
  return prepare_slide(slide, LevelChoice{0, 1.0}, std::move(raster), ann);
}

void set_classifier(SegNet& net, double probability) {
  for (std::size_t i = 0; i < net.params().entries().size(); ++i) {
    const auto& e = net.params().entries()[i];
    if (e.name == "classifier.weight") std::ranges::fill(net.params().value(i), 0.0f);
    if (e.name == "classifier.bias")
      net.params().value(i)[0] = static_cast<float>(std::log(probability / (1.0 - probability)));
  }
}

}  // namespace

TEST_CASE("tile grid arithmetic") {
  const TileGrid a = make_tile_grid(1, 1.0, {1024, 1024}, 256);
  CHECK(a.tiles.size() == 16);
  CHECK(a.rows == 4);
  CHECK(a.cols == 4);
  const TileGrid b = make_tile_grid(0, 1.0, {1000, 1000}, 256);
  CHECK(b.tiles.size() == 16);
  CHECK(b.padded_extent.width == 1024);
  CHECK(b.padded_extent.height == 1024);
  CHECK(b.extent.width == 1000);
  CHECK(make_tile_grid(0, 1.0, {256, 256}, 256).tiles.size() == 1);
  const TileGrid c = make_tile_grid(0, 1.0, {600, 300}, 256);
  CHECK(c.cols == 3);
  CHECK(c.rows == 2);
  // Row-major order.
  CHECK(c.tiles[1].origin.x == 256);
  CHECK(c.tiles[3].origin.y == 256);
}

TEST_CASE("tiles partition the padded extent") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(2000)), h = 1 + static_cast<int>(rng.below(2000));
    const TileGrid g = make_tile_grid(0, 1.0, {w, h}, 256);
    REQUIRE(g.padded_extent.width % 256 == 0);
    REQUIRE(g.padded_extent.width >= w);
    REQUIRE(g.padded_extent.width - w < 256);
    std::vector<int> hits(static_cast<std::size_t>(g.padded_extent.width) * g.padded_extent.height, 0);
    for (const Tile& t : g.tiles)
      for (int y = t.origin.y; y < t.origin.y + t.size.height; ++y)
        for (int x = t.origin.x; x < t.origin.x + t.size.width; ++x)
          ++hits[static_cast<std::size_t>(y) * g.padded_extent.width + x];
    CHECK(std::ranges::all_of(hits, [](int v) { return v == 1; }));
  }
}

TEST_CASE("binarize uses a >= threshold") {
  FloatMap below(8, 8, 0.49f), at(8, 8, 0.5f);
  CHECK(binarize(below, 0).count() == 0);
  CHECK(binarize(at, 0).count() == 64);
  Rng rng(3);
  FloatMap r(37, 21);
  for (auto& v : r.values) v = static_cast<float>(rng.uniform());
  const BinaryMask m = binarize(r, 2);
  CHECK(m.level_index() == 2);
  CHECK(m.role() == MaskRole::kPrediction);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) REQUIRE(m.at(x, y) == (r.at(x, y) >= 0.5f ? 1 : 0));
}

TEST_CASE("prediction is cropped, deterministic and tile-order invariant") {
  ModelBundle model = build_model(tiny_spec(false), 5);
  const SlideLevelData data = random_slide(1, 100, 70);
  const SlidePrediction ref = predict_slide(model.net, data, TaskMode::kSingle, {.batch_size = 5});
  CHECK(ref.probability.width == 100);
  CHECK(ref.probability.height == 70);
  CHECK(ref.grid.tiles.size() == 12);
  for (float v : ref.probability.values) REQUIRE((v > 0.0f && v < 1.0f));
  CHECK(predict_slide(model.net, data, TaskMode::kSingle, {.batch_size = 5}).probability.values ==
        ref.probability.values);

  Rng rng(9);
  std::vector<std::size_t> order(ref.grid.tiles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const SlidePrediction p = predict_tiles(model.net, data, ref.grid, TaskMode::kSingle, {.batch_size = 5}, order);
    CHECK(p.probability.values == ref.probability.values);
  }
  // Batch composition must not change the output either.
  CHECK(predict_slide(model.net, data, TaskMode::kSingle, {.batch_size = 1}).probability.values ==
        ref.probability.values);
}

TEST_CASE("multitask masking follows the classifier score") {
  ModelBundle model = build_model(tiny_spec(true), 8);
  const SlideLevelData data = random_slide(2, 64, 64);
  const SlidePrediction single = predict_slide(model.net, data, TaskMode::kSingle);

  set_classifier(model.net, 0.4);
  const SlidePrediction low = predict_slide(model.net, data, TaskMode::kMultitask);
  CHECK(std::ranges::all_of(low.probability.values, [](float v) { return v == 0.0f; }));
  for (float s : low.tile_scores) CHECK(s == doctest::Approx(0.4f));

  set_classifier(model.net, 0.9);
  const SlidePrediction high = predict_slide(model.net, data, TaskMode::kMultitask);
  CHECK(high.probability.values == single.probability.values);
  CHECK(predict_slide(model.net, data, TaskMode::kSingle).probability.values == single.probability.values);
}

TEST_CASE("multitask mask is a subset of the unmasked mask") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ModelBundle model = build_model(tiny_spec(true), 100 + seed);
    const SlideLevelData data = random_slide(20 + seed, 96, 96);
    const BinaryMask single = binarize(predict_slide(model.net, data, TaskMode::kSingle).probability, 0);
    const BinaryMask multi = binarize(predict_slide(model.net, data, TaskMode::kMultitask).probability, 0);
    for (std::size_t i = 0; i < single.values().size(); ++i) REQUIRE(multi.values()[i] <= single.values()[i]);
    CHECK(fp_tissue_percentage(multi, data.tissue) <= fp_tissue_percentage(single, data.tissue));
  }
}

TEST_CASE("head and mode mismatches are rejected") {
  ModelBundle single = build_model(tiny_spec(false), 1);
  const SlideLevelData data = random_slide(4, 64, 64);
  CHECK_THROWS_AS(predict_slide(single.net, data, TaskMode::kMultitask), Error);
  const TileGrid wrong = make_tile_grid(0, 1.0, {64, 64}, 64);
  CHECK_THROWS_AS(predict_tiles(single.net, data, wrong, TaskMode::kSingle), Error);
  const TileGrid g = make_tile_grid(0, 1.0, {64, 64}, 32);
  const std::vector<std::size_t> dup{0, 0, 1, 2};
  CHECK_THROWS_AS(predict_tiles(single.net, data, g, TaskMode::kSingle, {}, dup), Error);
}

TEST_CASE("prediction files round trip") {
  TempDir dir("pred");
  BinaryMask m(40, 30, 1, MaskRole::kPrediction);
  for (int x = 0; x < 40; x += 3) m.set(x, x % 30, 1);
  PredictionInfo info{"slide_a", "abc", TaskMode::kMultitask, 7.78, 0.5, 1, 2};
  write_prediction(dir.path(), info, m);
  PredictionInfo back;
  CHECK(read_prediction(dir.path(), "slide_a", &back) == m);
  CHECK(back.fingerprint == "abc");
  CHECK(back.mode == TaskMode::kMultitask);
  CHECK(back.resolution_um == 7.78);
  CHECK(back.fold == 2);
  try {
    read_prediction(dir.path(), "slide_b");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingPrediction);
    CHECK(std::string(e.what()).find("slide_b") != std::string::npos);
  }
}

TEST_CASE("nearest resampling of level masks") {
  BinaryMask m(8, 8, 0, MaskRole::kAnnotation);
  m.set(3, 3, 1);
  CHECK(resample_mask(m, 1.0) == m);
  const BinaryMask half = resample_mask(m, 2.0);
  CHECK(half.width() == 4);
  // Target pixel x samples level pixel floor(2x + 1).
  CHECK(half.at(1, 1) == 1);
  CHECK(half.count() == 1);
}
