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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wsiseg/image.hpp"

namespace wsiseg {

enum class SlideLabel { kPositive, kNegative };

std::string_view slide_label_name(SlideLabel label);

struct PyramidLevel {
  int index = 0;
  double um_per_px = 0.0;
  int width = 0;
  int height = 0;
  std::string tile_dir;  // relative to the slide directory
  int tile_size = 512;

  bool operator==(const PyramidLevel&) const = default;
};

/// Multi-level tiled raster. Holds metadata only; pixels are read on demand
/// from `root`, so a SlidePyramid is cheap to copy and safe to share between
/// readers.
struct SlidePyramid {
  std::string slide_id;
  std::string patient_id;
  SlideLabel label = SlideLabel::kNegative;
  std::vector<PyramidLevel> levels;
  std::filesystem::path root;

  const PyramidLevel& level(int index) const;

  /// Metadata equality; the storage location is ignored.
  bool same_metadata(const SlidePyramid& other) const {
    return slide_id == other.slide_id && patient_id == other.patient_id &&
           label == other.label && levels == other.levels;
  }
};

struct Point {
  int x = 0;
  int y = 0;
};

struct Size {
  int width = 0;
  int height = 0;
};

inline constexpr std::string_view kManifestName = "slide.json";

/// Reads and validates `slide.json`. Throws Error with kMissingFile,
/// kSchemaViolation or kLevelInconsistency.
SlidePyramid open_slide(const std::filesystem::path& manifest_path);

/// Writes `slide.json` for `slide` into slide.root.
void write_manifest(const SlidePyramid& slide);

/// Tiles a full-level raster into slide.root / level.tile_dir.
void write_level_tiles(const SlidePyramid& slide, int level,
                       const RgbImage& raster);

/// Region of `level`; pixels outside the level are white.
RgbImage read_region(const SlidePyramid& slide, int level, Point origin,
                     Size size);

RgbImage read_level(const SlidePyramid& slide, int level);

struct LevelChoice {
  int level = 0;
  double rescale = 1.0;  // target_um / level um_per_px, in [1, 2)
};

/// Coarsest level whose resolution is at least as fine as target_um.
LevelChoice level_for_resolution(const SlidePyramid& slide, double target_um);

struct TissueDetectorConfig {
  double min_saturation = 0.07;
  double max_brightness = 0.82;
};

/// HSV threshold detector: tissue iff S >= min_saturation or
/// V <= max_brightness.
BinaryMask detect_tissue(const RgbImage& raster, int level_index,
                         const TissueDetectorConfig& config = {});

BinaryMask compute_tissue_mask(const SlidePyramid& slide, int level,
                               const TissueDetectorConfig& config = {});

/// Elementwise AND; the result carries the annotation role.
BinaryMask apply_tissue_mask(const BinaryMask& annotation,
                             const BinaryMask& tissue);

std::filesystem::path mask_path(const SlidePyramid& slide, MaskRole role,
                                int level);
BinaryMask read_mask(const SlidePyramid& slide, MaskRole role, int level);
void write_mask(const SlidePyramid& slide, const BinaryMask& mask);

}  // namespace wsiseg
