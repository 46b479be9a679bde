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

#include <cmath>

#include "test_util.hpp"
#include "wsiseg/error.hpp"
#include "wsiseg/patch_pipeline.hpp"
#include "wsiseg/synthdata.hpp"

using namespace wsiseg;
using wsiseg::testing::TempDir;

namespace {

SlideLevelData level_data(const SynthSlide& s, int level) {
  return prepare_slide(s.slide, LevelChoice{level, 1.0}, s.levels[level], s.annotation[level]);
}

SynthSlide synth(std::uint64_t seed, int tumour_blobs, int base = 512) {
  SynthSpec spec;
  spec.seed = seed;
  spec.base_width = spec.base_height = base;
  spec.tumour_blobs = tumour_blobs;
  return render_slide(spec, "s" + std::to_string(seed), "p");
}

std::vector<std::uint8_t> mask_with(std::size_t positives, std::size_t total = 65536) {
  std::vector<std::uint8_t> m(total, 0);
  for (std::size_t i = 0; i < positives; ++i) m[(i * 7919) % total] = 1;
  return m;
}

SamplerConfig plain_config(int patch = 32) {
  SamplerConfig c;
  c.patch_px = patch;
  c.augmentations = AugmentationConfig::disabled();
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("CL1 threshold is fraction >= 0.51") {
  CHECK(assign_label_cl1(mask_with(0)) == 0);
  CHECK(assign_label_cl1(mask_with(33424)) == 1);
  CHECK(assign_label_cl1(mask_with(33423)) == 0);
  CHECK(assign_label_cl1(mask_with(65536)) == 1);
  CHECK(assign_label_cl1(mask_with(51, 100)) == 1);
  CHECK(assign_label_cl1(mask_with(50, 100)) == 0);
}

TEST_CASE("CL2 is any positive pixel") {
  CHECK(assign_label_cl2(mask_with(1)) == 1);
  CHECK(assign_label_cl2(mask_with(0)) == 0);
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint8_t> m(1024);
    const double p = rng.uniform() < 0.3 ? 0.0 : rng.uniform() * 0.01;
    std::size_t sum = 0;
    for (auto& v : m) sum += (v = rng.bernoulli(p));
    CHECK(assign_label_cl2(m) == (sum > 0 ? 1 : 0));
    CHECK(assign_label(LabelCriterion::kCl1, m) == (100 * sum >= 51 * m.size() ? 1 : 0));
  }
}

TEST_CASE("negative slide only yields normal patches") {
  const SlideLevelData data = level_data(synth(5, 0), 1);
  REQUIRE(data.cancer_pixels.empty());
  SamplerConfig config = plain_config();
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const PatchSample p = sample_patch(data, config, rng);
    REQUIRE(p.sampled_class == SampledClass::kNormal);
    REQUIRE(p.label == 0);
  }
}

TEST_CASE("class balance converges on a half-tumour slide") {
  SynthSpec spec;
  spec.seed = 6;
  spec.base_width = spec.base_height = 256;
  spec.fixed_tissue = {Blob{128, 128, 110}};
  spec.fixed_tumour = {Blob{128, 128, 110 / std::sqrt(2.0)}};
  const SynthSlide s = render_slide(spec, "half", "p");
  const SlideLevelData data = level_data(s, 0);
  const double coverage = static_cast<double>(data.cancer_pixels.size()) /
                          (data.cancer_pixels.size() + data.normal_pixels.size());
  CHECK(coverage == doctest::Approx(0.5).epsilon(0.05));
  SamplerConfig config = plain_config();
  Rng rng(2);
  int cancer = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    cancer += sample_patch(data, config, rng).sampled_class == SampledClass::kCancer;
  CHECK(std::abs(cancer / static_cast<double>(n) - 0.5) <= 0.02);
}

TEST_CASE("sampling is deterministic and respects masks") {
  const SlideLevelData data = level_data(synth(7, 2), 1);
  SamplerConfig config = plain_config();
  config.augmentations = AugmentationConfig{};
  Rng a(9), b(9);
  for (int i = 0; i < 300; ++i) {
    const PatchSample pa = sample_patch(data, config, a);
    const PatchSample pb = sample_patch(data, config, b);
    REQUIRE(pa.image == pb.image);
    REQUIRE(pa.mask == pb.mask);
    const Point c = pa.source.center;
    const bool ann = data.annotation.at(c.x, c.y);
    const bool tis = data.tissue.at(c.x, c.y);
    if (pa.sampled_class == SampledClass::kCancer) {
      CHECK(ann);
    } else {
      CHECK(tis);
      CHECK_FALSE(ann);
    }
    // With rescale 1 the centre pixel sits at (size/2, size/2).
    CHECK(pa.mask_at(config.patch_px / 2, config.patch_px / 2) == ann);
  }
}

TEST_CASE("labels stay consistent through augmentation") {
  const SlideLevelData data = level_data(synth(8, 3), 1);
  for (LabelCriterion crit : {LabelCriterion::kCl1, LabelCriterion::kCl2}) {
    SamplerConfig config = plain_config(64);
    config.label_criterion = crit;
    config.augmentations = AugmentationConfig{};
    PatchSampler sampler({&data}, config);
    for (int i = 0; i < 1000 / 16; ++i)
      for (const auto& p : sampler.next_batch(16)) {
        CHECK(p.label == assign_label(crit, p.mask));
        for (float v : p.image) REQUIRE((v >= 0.0f && v <= 1.0f));
      }
  }
}

TEST_CASE("flips commute with labelling") {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    PatchSample p;
    p.size = 32;
    p.image.assign(3 * 32 * 32, 0.5f);
    p.mask.resize(32 * 32);
    const double density = rng.uniform();
    for (auto& m : p.mask) m = rng.bernoulli(density);
    for (LabelCriterion crit : {LabelCriterion::kCl1, LabelCriterion::kCl2}) {
      const int before = assign_label(crit, p.mask);
      PatchSample q = p;
      AugmentParams params;
      params.flip_h = rng.bernoulli(0.5);
      params.flip_v = !params.flip_h || rng.bernoulli(0.5);
      apply_augment(q, params, crit);
      CHECK(q.label == before);
    }
  }
}

TEST_CASE("augmentation arithmetic") {
  PatchSample p;
  p.size = 8;
  p.image.resize(3 * 64);
  p.mask.assign(64, 0);
  for (std::size_t i = 0; i < p.image.size(); ++i) p.image[i] = static_cast<float>(i % 64) / 64.0f;
  p.mask[3] = 1;  // (x=3, y=0)

  SUBCASE("disabled config is the identity") {
    Rng rng(1);
    const PatchSample q = augment(p, AugmentationConfig::disabled(), LabelCriterion::kCl2, rng);
    CHECK(q.image == p.image);
    CHECK(q.mask == p.mask);
  }
  SUBCASE("horizontal flip mirrors x for image and mask") {
    PatchSample q = p;
    AugmentParams params;
    params.flip_h = true;
    apply_augment(q, params, LabelCriterion::kCl2);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(q.at(c, x, y) == p.at(c, 7 - x, y));
    CHECK(q.mask_at(4, 0) == 1);
    CHECK(q.mask_at(3, 0) == 0);
  }
  SUBCASE("vertical flip mirrors y") {
    PatchSample q = p;
    AugmentParams params;
    params.flip_v = true;
    apply_augment(q, params, LabelCriterion::kCl2);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) CHECK(q.at(1, x, y) == p.at(1, x, 7 - y));
    CHECK(q.mask_at(3, 7) == 1);
  }
  SUBCASE("contrast and brightness") {
    PatchSample q = p;
    std::fill(q.image.begin(), q.image.end(), 0.5f);
    AugmentParams params;
    params.contrast = 1.1;
    params.brightness = 0.05;
    apply_augment(q, params, LabelCriterion::kCl2);
    for (float v : q.image) CHECK(v == doctest::Approx(std::min(1.0, 0.5 * 1.1 + 0.05)));
    params.contrast = 2.5;
    apply_augment(q, params, LabelCriterion::kCl2);
    for (float v : q.image) CHECK(v == 1.0f);
  }
  SUBCASE("hsv shift of zero preserves colour") {
    PatchSample q = p;
    AugmentParams params;
    params.hsv = true;
    apply_augment(q, params, LabelCriterion::kCl2);
    for (std::size_t i = 0; i < q.image.size(); ++i)
      CHECK(q.image[i] == doctest::Approx(p.image[i]).epsilon(1e-5));
  }
  SUBCASE("blur preserves a constant image") {
    PatchSample q = p;
    std::fill(q.image.begin(), q.image.end(), 0.25f);
    AugmentParams params;
    params.blur_sigma = 0.8;
    apply_augment(q, params, LabelCriterion::kCl2);
    for (float v : q.image) CHECK(v == doctest::Approx(0.25f).epsilon(1e-5));
  }
}

TEST_CASE("multi-worker sampler order depends only on seed and worker count") {
  const SlideLevelData a = level_data(synth(11, 2), 1);
  const SlideLevelData b = level_data(synth(12, 0), 1);
  SamplerConfig config = plain_config();
  config.augmentations = AugmentationConfig{};
  for (int workers : {1, 3}) {
    PatchSampler s1({&a, &b}, config, workers);
    PatchSampler s2({&a, &b}, config, workers);
    for (int round = 0; round < 3; ++round) {
      const auto x = s1.next_batch(10);
      const auto y = s2.next_batch(10);
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(x[i].image == y[i].image);
        CHECK(x[i].source.slide_id == y[i].source.slide_id);
      }
    }
    CHECK(s1.provenance() == s2.provenance());
    CHECK(s1.provenance().size() == 30);
  }
}

TEST_CASE("slide without tissue is an error") {
  SynthSpec spec;
  spec.base_width = spec.base_height = 64;
  spec.tissue_blobs = 0;
  spec.tumour_blobs = 0;
  const SynthSlide s = render_slide(spec, "blank", "p");
  const SlideLevelData data = level_data(s, 0);
  Rng rng(1);
  try {
    sample_patch(data, plain_config(), rng);
    FAIL("expected empty tissue");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyTissue);
    CHECK(std::string(e.what()).find("empty tissue") != std::string::npos);
  }
}

TEST_CASE("resampled extraction at rescale 2") {
  RgbImage raster(64, 64, 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      raster.pixel(x, y)[0] = 100;
      raster.pixel(x, y)[1] = 50;
      raster.pixel(x, y)[2] = 200;
    }
  BinaryMask ann(64, 64, 0, MaskRole::kAnnotation);
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 64; ++x) ann.set(x, y, 1);
  SlidePyramid slide;
  slide.slide_id = "r";
  const SlideLevelData data = prepare_slide(slide, LevelChoice{0, 2.0}, raster, ann);
  const PatchSample p = extract_patch(data, {0, 0}, 32, LabelCriterion::kCl1);
  for (int y = 0; y < 31; ++y)
    for (int x = 0; x < 31; ++x) CHECK(p.at(0, x, y) == doctest::Approx(100.0f / 255.0f));
  // Target pixel x maps to level pixel floor(2x + 1).
  CHECK(p.mask_at(15, 0) == 0);
  CHECK(p.mask_at(16, 0) == 1);
  CHECK(p.label == 0);
}

TEST_CASE("sampler config validation") {
  SamplerConfig c;
  c.patch_px = 250;
  CHECK_THROWS_AS(c.validate(), Error);
  c.patch_px = 256;
  c.class_balance = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c.class_balance = 0.5;
  c.augmentations.flip_prob = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("prepare_slide from storage masks the annotation with detected tissue") {
  TempDir dir("prep");
  SynthSpec spec;
  spec.seed = 21;
  spec.base_width = spec.base_height = 400;
  spec.tile_size = 128;
  generate_slide(spec, "x", "p", dir.path());
  const SlideLevelData data = prepare_slide(open_slide(dir.path() / kManifestName), 7.78);
  CHECK(data.choice.level == 1);
  CHECK(data.raster.width() == 200);
  for (std::uint32_t i : data.cancer_pixels) REQUIRE(data.tissue.values()[i] == 1);
  CHECK_FALSE(data.cancer_pixels.empty());
}
