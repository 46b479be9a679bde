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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsiseg/image.hpp"
#include "wsiseg/rng.hpp"
#include "wsiseg/slide_store.hpp"

namespace wsiseg {

enum class LabelCriterion { kCl1, kCl2 };

std::string_view criterion_name(LabelCriterion criterion);
LabelCriterion parse_criterion(std::string_view text);

/// 1 iff at least 51% of the pixels are tumour. Computed in integers, so
/// 33424 of 65536 is positive and 33423 is not.
int assign_label_cl1(std::span<const std::uint8_t> mask);
/// 1 iff any pixel is tumour.
int assign_label_cl2(std::span<const std::uint8_t> mask);
int assign_label(LabelCriterion criterion, std::span<const std::uint8_t> mask);

enum class SampledClass { kNormal, kCancer };

struct PatchSource {
  std::string slide_id;
  int level = 0;
  Point origin;  // top-left, target-resolution pixels
  Point center;  // sampled centre, level pixels
  double rescale = 1.0;
};

/// Image is planar (3 x size x size) in [0, 1]; mask is size x size in {0, 1}.
struct PatchSample {
  int size = 0;
  std::vector<float> image;
  std::vector<std::uint8_t> mask;
  int label = 0;
  PatchSource source;
  SampledClass sampled_class = SampledClass::kNormal;

  float& at(int channel, int x, int y) {
    return image[(static_cast<std::size_t>(channel) * size + y) * size + x];
  }
  float at(int channel, int x, int y) const {
    return image[(static_cast<std::size_t>(channel) * size + y) * size + x];
  }
  std::uint8_t mask_at(int x, int y) const {
    return mask[static_cast<std::size_t>(y) * size + x];
  }
};

struct AugmentationConfig {
  bool flip_h = true;
  bool flip_v = true;
  double flip_prob = 0.5;
  double blur_max_sigma = 1.0;
  double blur_prob = 0.25;
  double hue_shift = 0.04;
  double saturation_shift = 0.1;
  double value_shift = 0.1;
  double hsv_prob = 0.5;
  double contrast_min = 0.85;
  double contrast_max = 1.15;
  double contrast_prob = 0.5;
  double brightness_min = -0.1;
  double brightness_max = 0.1;
  double brightness_prob = 0.5;

  static AugmentationConfig disabled();
  void validate() const;
};

/// Concrete draw of every augmentation; neutral values mean "not applied".
struct AugmentParams {
  bool flip_h = false;
  bool flip_v = false;
  double blur_sigma = 0.0;
  bool hsv = false;
  double hue = 0.0;
  double saturation = 0.0;
  double value = 0.0;
  double contrast = 1.0;
  double brightness = 0.0;
};

/// Consumes a fixed number of draws regardless of which transforms fire.
AugmentParams draw_augment_params(const AugmentationConfig& config, Rng& rng);

/// Flips move image and mask together; photometric transforms touch the
/// image only and are followed by a clamp to [0, 1]. The label is recomputed
/// from the (flipped) mask.
void apply_augment(PatchSample& sample, const AugmentParams& params,
                   LabelCriterion criterion);

PatchSample augment(PatchSample sample, const AugmentationConfig& config,
                    LabelCriterion criterion, Rng& rng);

struct SamplerConfig {
  double target_um = 15.56;
  int patch_px = 256;
  double class_balance = 0.5;  // probability of drawing the cancer class
  LabelCriterion label_criterion = LabelCriterion::kCl1;
  AugmentationConfig augmentations;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One slide resolved to the sampling level: raster, detected tissue and the
/// tissue-masked annotation, plus the pixel pools for each class.
struct SlideLevelData {
  SlidePyramid slide;
  LevelChoice choice;
  RgbImage raster;
  BinaryMask tissue;
  BinaryMask annotation;
  std::vector<std::uint32_t> cancer_pixels;  // annotation
  std::vector<std::uint32_t> normal_pixels;  // tissue and not annotation

  const std::vector<std::uint32_t>& pool(SampledClass c) const {
    return c == SampledClass::kCancer ? cancer_pixels : normal_pixels;
  }
};

/// Reads the level for target_um, detects tissue and masks the stored
/// annotation with it. Negative slides get an empty annotation.
SlideLevelData prepare_slide(const SlidePyramid& slide, double target_um,
                             const TissueDetectorConfig& detector = {});

/// Builds SlideLevelData from in-memory rasters (tests, synthetic oracles).
SlideLevelData prepare_slide(const SlidePyramid& slide, LevelChoice choice,
                             RgbImage raster, const BinaryMask& annotation,
                             const TissueDetectorConfig& detector = {});

/// Bilinear image / nearest-neighbour mask extraction of a patch_px square
/// at target resolution whose top-left is `origin` (target pixels).
PatchSample extract_patch(const SlideLevelData& data, Point origin, int patch_px,
                          LabelCriterion criterion);

/// Patch centred on a uniformly drawn pixel of a Bernoulli(class_balance)
/// class. An empty class falls back to the other one; if both are empty
/// the slide has no tissue and Error(kEmptyTissue) is thrown.
PatchSample sample_patch(const SlideLevelData& data, const SamplerConfig& config,
                         Rng& rng);

/// Draws balanced patches across several slides: class first, then a slide
/// that has pixels of that class, then a centre. Item i of every batch comes
/// from worker (i mod workers), whose stream is seeded with seed ^ worker.
class PatchSampler {
 public:
  PatchSampler(std::vector<const SlideLevelData*> slides, SamplerConfig config,
               int workers = 1);

  /// Sampled and augmented batch; order depends only on (seed, workers).
  std::vector<PatchSample> next_batch(int batch_size);

  /// Slide ids in the order they were drawn.
  const std::vector<std::string>& provenance() const { return provenance_; }

 private:
  PatchSample draw(Rng& rng) const;

  std::vector<const SlideLevelData*> slides_;
  SamplerConfig config_;
  std::vector<Rng> streams_;
  std::vector<std::string> provenance_;
};

}  // namespace wsiseg
