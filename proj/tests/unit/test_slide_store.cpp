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

#include <fstream>
#include <json.hpp>

#include "test_util.hpp"
#include "wsiseg/error.hpp"
#include "wsiseg/png_io.hpp"
#include "wsiseg/slide_store.hpp"
#include "wsiseg/synthdata.hpp"

using namespace wsiseg;
using wsiseg::testing::TempDir;

namespace {

SlidePyramid three_level_slide(const std::filesystem::path& root, int base = 1024) {
  SlidePyramid s;
  s.slide_id = "s1";
  s.patient_id = "p1";
  s.label = SlideLabel::kPositive;
  s.root = root;
  for (int k = 0; k < 3; ++k) {
    const int dim = (base + (1 << k) - 1) >> k;
    s.levels.push_back({k, 3.89 * (1 << k), dim, dim, "level_" + std::to_string(k), 512});
  }
  return s;
}

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.base_width = 500;
  spec.base_height = 420;
  spec.tile_size = 128;
  return spec;
}

ErrorCode error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << doc.dump();
}

}  // namespace

TEST_CASE("open_slide reads a three-level manifest") {
  TempDir dir("open");
  write_manifest(three_level_slide(dir.path()));
  const SlidePyramid s = open_slide(dir.path() / kManifestName);
  REQUIRE(s.levels.size() == 3);
  CHECK(s.level(2).width == 256);
  CHECK(s.level(2).height == 256);
  CHECK(s.level(1).um_per_px == doctest::Approx(7.78));
  CHECK(s.label == SlideLabel::kPositive);
}

TEST_CASE("open_slide reports each failure class distinctly") {
  TempDir dir("open_err");
  CHECK(error_code_of([&] { open_slide(dir.path() / "nope.json"); }) ==
        ErrorCode::kMissingFile);

  nlohmann::json base = {{"slide_id", "a"}, {"patient_id", "p"}, {"label", "negative"}};
  auto level = [](int i, double um, int w) {
    return nlohmann::json{{"index", i}, {"um_per_px", um}, {"width", w},
                          {"height", w}, {"tile_dir", "l"}, {"tile_size", 512}};
  };

  auto unordered = base;
  unordered["levels"] = {level(0, 7.78, 512), level(1, 3.89, 1024)};
  write_json(dir.path() / "u" / "slide.json", unordered);
  try {
    open_slide(dir.path() / "u" / "slide.json");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLevelInconsistency);
    CHECK(std::string(e.what()).find("levels not strictly increasing") != std::string::npos);
  }

  auto bad_dims = base;
  bad_dims["levels"] = {level(0, 3.89, 1000), level(1, 7.78, 499)};
  write_json(dir.path() / "d" / "slide.json", bad_dims);
  CHECK(error_code_of([&] { open_slide(dir.path() / "d" / "slide.json"); }) ==
        ErrorCode::kLevelInconsistency);

  auto odd_ratio = base;
  odd_ratio["levels"] = {level(0, 3.89, 1000), level(1, 10.0, 500)};
  write_json(dir.path() / "r" / "slide.json", odd_ratio);
  CHECK(error_code_of([&] { open_slide(dir.path() / "r" / "slide.json"); }) ==
        ErrorCode::kLevelInconsistency);

  auto missing_key = base;
  missing_key.erase("patient_id");
  missing_key["levels"] = {level(0, 3.89, 1000)};
  write_json(dir.path() / "m" / "slide.json", missing_key);
  CHECK(error_code_of([&] { open_slide(dir.path() / "m" / "slide.json"); }) ==
        ErrorCode::kSchemaViolation);

  auto bad_label = base;
  bad_label["label"] = "maybe";
  bad_label["levels"] = {level(0, 3.89, 1000)};
  write_json(dir.path() / "l" / "slide.json", bad_label);
  CHECK(error_code_of([&] { open_slide(dir.path() / "l" / "slide.json"); }) ==
        ErrorCode::kSchemaViolation);

  std::ofstream(dir.path() / "garbage.json") << "{ not json";
  CHECK(error_code_of([&] { open_slide(dir.path() / "garbage.json"); }) ==
        ErrorCode::kSchemaViolation);
}

TEST_CASE("synthetic slide round-trips through storage") {
  TempDir dir("roundtrip");
  const SynthSlide synth = generate_slide(small_spec(3), "rt", "pt", dir.path());
  const SlidePyramid opened = open_slide(dir.path() / kManifestName);
  CHECK(opened.same_metadata(synth.slide));

  SUBCASE("full-level reads equal the generator rasters") {
    for (int k = 0; k < 3; ++k) CHECK(read_level(opened, k) == synth.levels[k]);
  }
  SUBCASE("random regions equal generator crops with white padding") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const int level = static_cast<int>(rng.below(3));
      const RgbImage& full = synth.levels[static_cast<std::size_t>(level)];
      const Point o{static_cast<int>(rng.below(full.width() + 60)) - 30,
                    static_cast<int>(rng.below(full.height() + 60)) - 30};
      const Size sz{1 + static_cast<int>(rng.below(200)), 1 + static_cast<int>(rng.below(200))};
      const RgbImage region = read_region(opened, level, o, sz);
      REQUIRE(region.width() == sz.width);
      for (int y = 0; y < sz.height; ++y)
        for (int x = 0; x < sz.width; ++x) {
          const int sx = o.x + x, sy = o.y + y;
          const bool inside = sx >= 0 && sy >= 0 && sx < full.width() && sy < full.height();
          for (int c = 0; c < 3; ++c) {
            const int expect = inside ? full.pixel(sx, sy)[c] : 255;
            if (region.pixel(x, y)[c] != expect) {
              FAIL("pixel mismatch at " << x << "," << y);
            }
          }
        }
    }
  }
  SUBCASE("out-of-bounds origin pads a white band") {
    const RgbImage region = read_region(opened, 0, {-10, -10}, {20, 20});
    CHECK(region.width() == 20);
    CHECK(region.height() == 20);
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x)
        if (x < 10 || y < 10) CHECK(region.pixel(x, y)[0] == 255);
  }
  SUBCASE("read_region is pure") {
    CHECK(read_region(opened, 1, {13, 7}, {150, 90}) ==
          read_region(opened, 1, {13, 7}, {150, 90}));
  }
  SUBCASE("nonexistent level") {
    CHECK(error_code_of([&] { read_region(opened, 3, {0, 0}, {1, 1}); }) ==
          ErrorCode::kNoSuchLevel);
  }
  SUBCASE("stored masks read back exactly") {
    for (int k = 0; k < 3; ++k) {
      CHECK(read_mask(opened, MaskRole::kTissue, k) == synth.tissue[k]);
      CHECK(read_mask(opened, MaskRole::kAnnotation, k) == synth.annotation[k]);
    }
  }
}

TEST_CASE("full-level read of a 1024 base at level 2 is 256x256") {
  SynthSpec spec;
  spec.seed = 1;
  spec.base_width = spec.base_height = 1024;
  TempDir dir("lvl2");
  generate_slide(spec, "a", "p", dir.path());
  const RgbImage img = read_level(open_slide(dir.path() / kManifestName), 2);
  CHECK(img.width() == 256);
  CHECK(img.height() == 256);
}

TEST_CASE("level_for_resolution picks the coarsest level not coarser than target") {
  TempDir dir("lfr");
  const SlidePyramid s = three_level_slide(dir.path());
  auto c = level_for_resolution(s, 15.56);
  CHECK(c.level == 2);
  CHECK(c.rescale == 1.0);
  c = level_for_resolution(s, 7.78);
  CHECK(c.level == 1);
  CHECK(c.rescale == 1.0);
  c = level_for_resolution(s, 10.0);
  CHECK(c.level == 1);
  CHECK(c.rescale == doctest::Approx(10.0 / 7.78).epsilon(1e-12));
  CHECK(c.rescale == doctest::Approx(1.2853).epsilon(1e-4));

  // Brute-force oracle over a sweep of targets.
  for (double target = 3.89; target < 40.0; target += 0.37) {
    int expect = -1;
    for (const auto& l : s.levels)
      if (l.um_per_px <= target * (1 + 1e-9)) expect = l.index;
    const auto got = level_for_resolution(s, target);
    CHECK(got.level == expect);
    CHECK(got.rescale >= 1.0);
    if (expect < 2) CHECK(got.rescale < 2.0);
  }
  CHECK(error_code_of([&] { level_for_resolution(s, 2.0); }) ==
        ErrorCode::kResolutionTooFine);
}

TEST_CASE("tissue detector thresholds") {
  const RgbImage white(32, 32, 255);
  CHECK(detect_tissue(white, 0).count() == 0);
  const RgbImage black(32, 32, 0);
  CHECK(detect_tissue(black, 0).count() == 32u * 32u);

  SUBCASE("output depends only on pixel values") {
    const SynthSlide synth = render_slide(small_spec(8), "x", "p");
    const auto a = detect_tissue(synth.levels[1], 1);
    const auto b = detect_tissue(synth.levels[1], 0);
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  }
  SUBCASE("recovers declared tissue on synthetic slides at every level") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
      const SynthSlide synth = render_slide(small_spec(seed), "x", "p");
      for (int k = 0; k < 3; ++k) {
        const auto detected = detect_tissue(synth.levels[k], k);
        std::size_t declared = 0, hit = 0;
        for (std::size_t i = 0; i < detected.values().size(); ++i) {
          if (!synth.tissue[k].values()[i]) continue;
          ++declared;
          hit += detected.values()[i];
        }
        REQUIRE(declared > 0);
        CHECK(static_cast<double>(hit) / declared >= 0.99);
      }
    }
  }
}

TEST_CASE("apply_tissue_mask is an elementwise AND") {
  BinaryMask ones(16, 16, 0, MaskRole::kAnnotation, 1);
  BinaryMask tissue_ones(16, 16, 0, MaskRole::kTissue, 1);
  BinaryMask tissue_zero(16, 16, 0, MaskRole::kTissue, 0);
  CHECK(apply_tissue_mask(ones, tissue_ones).count() == 256);
  CHECK(apply_tissue_mask(ones, tissue_zero).count() == 0);

  Rng rng(77);
  BinaryMask a(64, 64, 1, MaskRole::kAnnotation), t(64, 64, 1, MaskRole::kTissue);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      a.set(x, y, rng.bernoulli(0.5));
      t.set(x, y, rng.bernoulli(0.5));
    }
  const BinaryMask out = apply_tissue_mask(a, t);
  CHECK(out.role() == MaskRole::kAnnotation);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) CHECK(out.at(x, y) == (a.at(x, y) && t.at(x, y)));
  CHECK(apply_tissue_mask(out, t) == out);

  BinaryMask wrong(63, 64, 1, MaskRole::kTissue);
  CHECK(error_code_of([&] { apply_tissue_mask(a, wrong); }) == ErrorCode::kDimensionMismatch);
  BinaryMask other_level(64, 64, 2, MaskRole::kTissue);
  CHECK(error_code_of([&] { apply_tissue_mask(a, other_level); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("mask PNGs use 0/255 encoding") {
  TempDir dir("maskpng");
  BinaryMask m(5, 3, 0, MaskRole::kPrediction);
  m.set(1, 1, 1);
  write_png_mask(dir.path() / "m.png", m);
  const RgbImage raw = read_png_rgb(dir.path() / "m.png");
  CHECK(raw.pixel(1, 1)[0] == 255);
  CHECK(raw.pixel(0, 0)[0] == 0);
  CHECK(read_png_mask(dir.path() / "m.png", 0, MaskRole::kPrediction) == m);
}
