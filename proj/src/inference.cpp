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

#include "wsiseg/inference.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"
#include "wsiseg/png_io.hpp"

namespace wsiseg {

std::string_view task_mode_name(TaskMode mode) {
  return mode == TaskMode::kMultitask ? "multitask" : "single";
}

TaskMode parse_task_mode(std::string_view text) {
  if (text == "single") return TaskMode::kSingle;
  if (text == "multitask") return TaskMode::kMultitask;
  throw Error(ErrorCode::kConfig, "unknown mode '" + std::string(text) + "'");
}

Size target_extent(Size level_extent, double rescale) {
  if (rescale == 1.0) return level_extent;
  return {static_cast<int>(std::ceil(level_extent.width / rescale - 1e-9)),
          static_cast<int>(std::ceil(level_extent.height / rescale - 1e-9))};
}

TileGrid make_tile_grid(int level, double rescale, Size level_extent, int patch_px) {
  if (patch_px < 1) throw Error(ErrorCode::kInvalidArgument, "patch_px must be positive");
  TileGrid grid;
  grid.level = level;
  grid.rescale = rescale;
  grid.patch_px = patch_px;
  grid.extent = target_extent(level_extent, rescale);
  grid.cols = (grid.extent.width + patch_px - 1) / patch_px;
  grid.rows = (grid.extent.height + patch_px - 1) / patch_px;
  grid.padded_extent = {grid.cols * patch_px, grid.rows * patch_px};
  grid.tiles.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c)
      grid.tiles.push_back({r, c, {c * patch_px, r * patch_px}, {patch_px, patch_px}});
  return grid;
}

TileGrid tile_slide(const SlidePyramid& slide, double target_um, int patch_px) {
  const LevelChoice choice = level_for_resolution(slide, target_um);
  const PyramidLevel& lv = slide.level(choice.level);
  return make_tile_grid(choice.level, choice.rescale, {lv.width, lv.height}, patch_px);
}

SlidePrediction predict_tiles(SegNet& net, const SlideLevelData& data, const TileGrid& grid,
                              TaskMode mode, const InferenceOptions& options,
                              std::span<const std::size_t> order) {
  const ArchitectureSpec& spec = net.spec();
  if (mode == TaskMode::kMultitask && !spec.classifier)
    throw Error(ErrorCode::kInvalidArgument, "multitask inference needs a classifier head");
  if (grid.patch_px != spec.input_px)
    throw Error(ErrorCode::kShapeMismatch, "tile size " + std::to_string(grid.patch_px) +
                                               " differs from model input " +
                                               std::to_string(spec.input_px));
  if (options.batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");

  std::vector<std::size_t> visit(order.begin(), order.end());
  if (visit.empty()) {
    visit.resize(grid.tiles.size());
    std::iota(visit.begin(), visit.end(), std::size_t{0});
  }
  if (visit.size() != grid.tiles.size())
    throw Error(ErrorCode::kInvalidArgument, "tile order must list every tile once");

  SlidePrediction out;
  out.grid = grid;
  out.probability = FloatMap(grid.extent.width, grid.extent.height, 0.0f);
  out.tile_scores.assign(grid.tiles.size(), 1.0f);
  std::vector<int> written(grid.tiles.size(), 0);

  const int p = grid.patch_px;
  const std::size_t plane = static_cast<std::size_t>(p) * p;
  for (std::size_t start = 0; start < visit.size(); start += static_cast<std::size_t>(options.batch_size)) {
    const std::size_t count = std::min(visit.size() - start, static_cast<std::size_t>(options.batch_size));
    Tensor x({static_cast<int>(count), spec.input_channels, p, p});
    for (std::size_t b = 0; b < count; ++b) {
      const Tile& t = grid.tiles.at(visit[start + b]);
      const PatchSample patch = extract_patch(data, t.origin, p, LabelCriterion::kCl2);
      std::memcpy(x.sample(static_cast<int>(b)), patch.image.data(), 3 * plane * sizeof(float));
    }
    net.forward(x, false);
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t ti = visit[start + b];
      if (written[ti]++) throw Error(ErrorCode::kInvalidArgument, "tile order repeats a tile");
      const Tile& t = grid.tiles[ti];
      const float score = spec.classifier ? net.cls()[b] : 1.0f;
      out.tile_scores[ti] = score;
      const bool zeroed = mode == TaskMode::kMultitask && score < options.classifier_threshold;
      const float* seg = net.seg().plane(static_cast<int>(b), 0);
      const int w = std::min(p, grid.extent.width - t.origin.x);
      const int h = std::min(p, grid.extent.height - t.origin.y);
      for (int yy = 0; yy < h; ++yy) {
        float* dst = &out.probability.at(t.origin.x, t.origin.y + yy);
        if (zeroed) {
          std::fill(dst, dst + w, 0.0f);
        } else {
          std::memcpy(dst, seg + static_cast<std::size_t>(yy) * p, static_cast<std::size_t>(w) * sizeof(float));
        }
      }
    }
  }
  return out;
}

SlidePrediction predict_slide(SegNet& net, const SlideLevelData& data, TaskMode mode,
                              const InferenceOptions& options) {
  const PyramidLevel& lv = data.slide.level(data.choice.level);
  const TileGrid grid =
      make_tile_grid(data.choice.level, data.choice.rescale, {lv.width, lv.height}, net.spec().input_px);
  return predict_tiles(net, data, grid, mode, options);
}

SlidePrediction predict_slide(SegNet& net, const SlidePyramid& slide, double target_um,
                              TaskMode mode, const InferenceOptions& options) {
  return predict_slide(net, prepare_slide(slide, target_um), mode, options);
}

BinaryMask binarize(const FloatMap& probability, int level_index, double threshold) {
  BinaryMask mask(probability.width, probability.height, level_index, MaskRole::kPrediction);
  auto v = mask.values();
  const float t = static_cast<float>(threshold);
  for (std::size_t i = 0; i < probability.values.size(); ++i) v[i] = probability.values[i] >= t ? 1 : 0;
  return mask;
}

BinaryMask resample_mask(const BinaryMask& mask, double rescale) {
  if (rescale == 1.0) return mask;
  const Size ext = target_extent({mask.width(), mask.height()}, rescale);
  BinaryMask out(ext.width, ext.height, mask.level_index(), mask.role());
  for (int y = 0; y < ext.height; ++y) {
    const int sy = std::min(mask.height() - 1, static_cast<int>(std::floor((y + 0.5) * rescale)));
    for (int x = 0; x < ext.width; ++x) {
      const int sx = std::min(mask.width() - 1, static_cast<int>(std::floor((x + 0.5) * rescale)));
      out.set(x, y, mask.at(sx, sy));
    }
  }
  return out;
}

std::filesystem::path prediction_path(const std::filesystem::path& dir, std::string_view slide_id) {
  return dir / (std::string(slide_id) + ".png");
}

void write_prediction(const std::filesystem::path& dir, const PredictionInfo& info,
                      const BinaryMask& mask) {
  std::filesystem::create_directories(dir);
  write_png_mask(prediction_path(dir, info.slide_id), mask);
  const nlohmann::json doc{{"slide_id", info.slide_id},
                           {"fingerprint", info.fingerprint},
                           {"mode", task_mode_name(info.mode)},
                           {"resolution_um", info.resolution_um},
                           {"threshold", info.threshold},
                           {"level", info.level},
                           {"fold", info.fold}};
  write_file_atomic(dir / (info.slide_id + ".json"), doc.dump(2) + "\n");
}

BinaryMask read_prediction(const std::filesystem::path& dir, std::string_view slide_id,
                           PredictionInfo* info) {
  const auto png = prediction_path(dir, slide_id);
  const auto side = dir / (std::string(slide_id) + ".json");
  if (!std::filesystem::exists(png) || !std::filesystem::exists(side))
    throw Error(ErrorCode::kMissingPrediction, "missing prediction for slide " + std::string(slide_id));
  PredictionInfo meta;
  try {
    const auto doc = nlohmann::json::parse(read_file(side));
    meta.slide_id = doc.at("slide_id").get<std::string>();
    meta.fingerprint = doc.at("fingerprint").get<std::string>();
    meta.mode = parse_task_mode(doc.at("mode").get<std::string>());
    meta.resolution_um = doc.at("resolution_um").get<double>();
    meta.threshold = doc.at("threshold").get<double>();
    meta.level = doc.at("level").get<int>();
    meta.fold = doc.value("fold", -1);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, side.string() + ": " + e.what());
  }
  BinaryMask mask = read_png_mask(png, meta.level, MaskRole::kPrediction);
  if (info) *info = meta;
  return mask;
}

}  // namespace wsiseg
