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
#include "wsiseg/patch_pipeline.hpp"
#include "wsiseg/segnet.hpp"
#include "wsiseg/slide_store.hpp"

namespace wsiseg {

enum class TaskMode { kSingle, kMultitask };
std::string_view task_mode_name(TaskMode mode);
TaskMode parse_task_mode(std::string_view text);

struct Tile {
  int row = 0;
  int col = 0;
  Point origin;  // target-resolution pixels
  Size size;
};

/// Non-overlapping row-major grid over the slide at target resolution.
/// `extent` is the level extent expressed in target pixels; the padded extent
/// rounds it up to whole tiles.
struct TileGrid {
  int level = 0;
  double rescale = 1.0;
  int patch_px = 256;
  int rows = 0;
  int cols = 0;
  Size extent;
  Size padded_extent;
  std::vector<Tile> tiles;
};

TileGrid make_tile_grid(int level, double rescale, Size level_extent, int patch_px);
TileGrid tile_slide(const SlidePyramid& slide, double target_um, int patch_px = 256);
/// Extent of a level raster once resampled by `rescale`.
Size target_extent(Size level_extent, double rescale);

struct InferenceOptions {
  int batch_size = 16;
  double classifier_threshold = 0.5;
};

struct SlidePrediction {
  TileGrid grid;
  FloatMap probability;            // extent-sized
  std::vector<float> tile_scores;  // classifier output per tile, grid order
};

/// Evaluation-mode prediction of every tile, visited in `order` (indices
/// into grid.tiles; empty means grid order). In multitask mode tiles whose
/// classifier score is below the threshold are written as zeros.
SlidePrediction predict_tiles(SegNet& net, const SlideLevelData& data, const TileGrid& grid,
                              TaskMode mode, const InferenceOptions& options = {},
                              std::span<const std::size_t> order = {});
SlidePrediction predict_slide(SegNet& net, const SlideLevelData& data, TaskMode mode,
                              const InferenceOptions& options = {});
SlidePrediction predict_slide(SegNet& net, const SlidePyramid& slide, double target_um,
                              TaskMode mode, const InferenceOptions& options = {});

/// 1 where probability >= threshold.
BinaryMask binarize(const FloatMap& probability, int level_index, double threshold = 0.5);

/// Nearest-neighbour resampling of a level mask onto the target grid.
BinaryMask resample_mask(const BinaryMask& mask, double rescale);

struct PredictionInfo {
  std::string slide_id;
  std::string fingerprint;
  TaskMode mode = TaskMode::kSingle;
  double resolution_um = 0.0;
  double threshold = 0.5;
  int level = 0;
  int fold = -1;  // -1 when not produced by a cross-validation run
};

/// <dir>/<slide_id>.png plus <slide_id>.json.
void write_prediction(const std::filesystem::path& dir, const PredictionInfo& info,
                      const BinaryMask& mask);
std::filesystem::path prediction_path(const std::filesystem::path& dir,
                                      std::string_view slide_id);
/// Throws kMissingPrediction naming the slide when the PNG is absent.
BinaryMask read_prediction(const std::filesystem::path& dir, std::string_view slide_id,
                           PredictionInfo* info = nullptr);

}  // namespace wsiseg
