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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsiseg/dataset.hpp"
#include "wsiseg/inference.hpp"
#include "wsiseg/metrics.hpp"
#include "wsiseg/segnet.hpp"
#include "wsiseg/training.hpp"

namespace wsiseg {

struct SynthOptions {
  int patients = 29;
  int per_patient = 2;
  double positive_fraction = 51.0 / 58.0;
  int base_px = 4096;
  double base_um = 3.89;
  int levels = 3;
  int tile_size = 512;
};

/// One experiment (one Table-1 style row). Serialized as flat JSON; every
/// key is listed in docs/config.md.
struct ExperimentConfig {
  std::filesystem::path dataset_dir = "data/synthetic";
  std::filesystem::path output_dir = "out";
  std::string run_id = "run";
  TaskMode mode = TaskMode::kSingle;
  int folds = 5;
  TrainConfig train;
  ArchitectureSpec arch;  // input_px and classifier follow patch_px and mode
  SynthOptions synth;

  void validate() const;
  std::filesystem::path run_dir() const { return output_dir / "runs" / run_id; }
};

nlohmann::json config_to_json(const ExperimentConfig& config);
/// Unknown keys and wrong types are kConfig errors.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
/// "key=value" where value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct FoldOutcome {
  int fold_id = 0;
  std::string fingerprint;
  std::string checksum;
  std::vector<EpochRecord> epochs;
  MetricsSummary summary;
};

struct RunOutcome {
  std::filesystem::path run_dir;
  MetricsSummary summary;
  std::vector<FoldOutcome> folds;
  std::vector<MetricsRow> rows;
};

DatasetIndex synth_dataset(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Loads the dataset, builds and writes the fold manifest.
FoldManifest make_run_folds(const ExperimentConfig& config, const std::filesystem::path& out_path);

/// folds -> train -> predict validation slides -> metrics. Writes
/// config.json, folds.json, fold_<i>/..., predictions/, metrics.csv,
/// summary.json and run.json under config.run_dir(). Errors are rethrown
/// with the failing stage and fold.
RunOutcome run_experiment(const ExperimentConfig& config, std::ostream* progress = nullptr);

struct InferRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset_dir;
  std::vector<std::string> slide_ids;  // empty: every slide in the index
  TaskMode mode = TaskMode::kSingle;
  double resolution_um = 15.56;
  InferenceOptions options;
  int fold = -1;
  std::filesystem::path out_dir;
};
void infer_slides(const InferRequest& request);

/// Recomputes metrics for every slide listed in the dataset index from the
/// stored prediction masks; writes metrics.csv and summary.json to out_dir.
RunOutcome evaluate_predictions(const std::filesystem::path& predictions_dir,
                                const std::filesystem::path& dataset_dir,
                                const std::filesystem::path& out_dir);

nlohmann::json summary_to_json(const MetricsSummary& summary);
/// "| run_id | median (IQR) | positive median (IQR) | fp% mean +/- std |"
std::string table_row(const std::string& run_id, const MetricsSummary& summary);

}  // namespace wsiseg
