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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsiseg/adam.hpp"
#include "wsiseg/inference.hpp"
#include "wsiseg/objective.hpp"
#include "wsiseg/patch_pipeline.hpp"
#include "wsiseg/segnet.hpp"
#include "wsiseg/slide_store.hpp"

namespace wsiseg {

struct FoldEntry {
  int fold_id = 0;
  std::vector<std::string> train_slide_ids;
  std::vector<std::string> val_slide_ids;
};

struct FoldManifest {
  int k = 5;
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::vector<FoldEntry> folds;
};

/// Patients are shuffled by seed and dealt, one at a time, to the group
/// currently holding the fewest slides (lowest index on ties). Fold i
/// validates on group i and trains on the rest.
FoldManifest make_folds(const std::vector<SlidePyramid>& slides, int k, std::uint64_t seed);
void write_fold_manifest(const std::filesystem::path& path, const FoldManifest& manifest);
FoldManifest read_fold_manifest(const std::filesystem::path& path);

struct TrainConfig {
  double resolution_um = 15.56;
  int epochs = 30;
  int steps_per_epoch = 250;
  int batch_size = 16;
  AdamConfig adam;
  bool multitask = false;
  std::optional<LabelCriterion> label_criterion;
  double cls_weight = 1.0;
  std::uint64_t seed = 0;
  int sampler_workers = 1;
  /// Patch size, class balance and augmentation; target_um, seed and
  /// criterion are taken from the fields above.
  SamplerConfig sampler;
  InferenceOptions inference;

  void validate() const;
  std::string canonical() const;
};

struct EpochRecord {
  int epoch = 0;
  double mean_total_loss = 0.0;
  double val_median_dice = 0.0;
  double val_median_dice_pos = 0.0;
};

struct TrainResult {
  ModelBundle model;
  std::vector<EpochRecord> epochs;
  std::vector<LossReport> steps;
  std::size_t patches_drawn = 0;
};

std::string training_fingerprint(const ArchitectureSpec& spec, const TrainConfig& config,
                                 int fold_id, const std::string& dataset_hash);

/// Trains one fold. `train` and `val` hold the fold's slides prepared at
/// config.resolution_um. Writes train_log.csv, epochs.json, epoch_<e>.ckpt
/// and final.ckpt under fold_dir. A non-finite loss writes
/// nonfinite_dump.json and throws kNonFiniteLoss.
TrainResult train_fold(const TrainConfig& config, const ArchitectureSpec& spec,
                       const FoldEntry& fold, const std::vector<const SlideLevelData*>& train,
                       const std::vector<const SlideLevelData*>& val,
                       const std::filesystem::path& fold_dir, const std::string& dataset_hash);

/// Median Dice over the given slides, all and positive-only.
std::pair<double, double> validation_dice(SegNet& net, const std::vector<const SlideLevelData*>& val,
                                          TaskMode mode, const InferenceOptions& options);

}  // namespace wsiseg
