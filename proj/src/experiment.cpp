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

#include "wsiseg/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <set>

#include "wsiseg/checkpoint.hpp"
#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"
#include "wsiseg/hash.hpp"
#include "wsiseg/synthdata.hpp"

namespace wsiseg {

using nlohmann::json;

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kConfig, "config key '" + key + "' has the wrong type");
  }
}

using Setter = std::function<void(ExperimentConfig&, const json&, const std::string&)>;

#define WSISEG_FIELD(key, type, expr) \
  {key, [](ExperimentConfig& c, const json& v, const std::string& k) { expr = get_as<type>(v, k); }}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset_dir", [](ExperimentConfig& c, const json& v, const std::string& k) {
         c.dataset_dir = get_as<std::string>(v, k);
       }},
      {"output_dir", [](ExperimentConfig& c, const json& v, const std::string& k) {
         c.output_dir = get_as<std::string>(v, k);
       }},
      WSISEG_FIELD("run_id", std::string, c.run_id),
      {"mode", [](ExperimentConfig& c, const json& v, const std::string& k) {
         c.mode = parse_task_mode(get_as<std::string>(v, k));
       }},
      {"label_criterion", [](ExperimentConfig& c, const json& v, const std::string& k) {
         if (v.is_null()) {
           c.train.label_criterion.reset();
         } else {
           c.train.label_criterion = parse_criterion(get_as<std::string>(v, k));
         }
       }},
      WSISEG_FIELD("folds", int, c.folds),
      WSISEG_FIELD("resolution_um", double, c.train.resolution_um),
      WSISEG_FIELD("epochs", int, c.train.epochs),
      WSISEG_FIELD("steps_per_epoch", int, c.train.steps_per_epoch),
      WSISEG_FIELD("batch_size", int, c.train.batch_size),
      WSISEG_FIELD("learning_rate", double, c.train.adam.learning_rate),
      WSISEG_FIELD("adam_beta1", double, c.train.adam.beta1),
      WSISEG_FIELD("adam_beta2", double, c.train.adam.beta2),
      WSISEG_FIELD("adam_eps", double, c.train.adam.eps),
      WSISEG_FIELD("cls_weight", double, c.train.cls_weight),
      WSISEG_FIELD("seed", std::uint64_t, c.train.seed),
      WSISEG_FIELD("sampler_workers", int, c.train.sampler_workers),
      WSISEG_FIELD("patch_px", int, c.train.sampler.patch_px),
      WSISEG_FIELD("class_balance", double, c.train.sampler.class_balance),
      WSISEG_FIELD("flip_h", bool, c.train.sampler.augmentations.flip_h),
      WSISEG_FIELD("flip_v", bool, c.train.sampler.augmentations.flip_v),
      WSISEG_FIELD("flip_prob", double, c.train.sampler.augmentations.flip_prob),
      WSISEG_FIELD("blur_max_sigma", double, c.train.sampler.augmentations.blur_max_sigma),
      WSISEG_FIELD("blur_prob", double, c.train.sampler.augmentations.blur_prob),
      WSISEG_FIELD("hue_shift", double, c.train.sampler.augmentations.hue_shift),
      WSISEG_FIELD("saturation_shift", double, c.train.sampler.augmentations.saturation_shift),
      WSISEG_FIELD("value_shift", double, c.train.sampler.augmentations.value_shift),
      WSISEG_FIELD("hsv_prob", double, c.train.sampler.augmentations.hsv_prob),
      WSISEG_FIELD("contrast_min", double, c.train.sampler.augmentations.contrast_min),
      WSISEG_FIELD("contrast_max", double, c.train.sampler.augmentations.contrast_max),
      WSISEG_FIELD("contrast_prob", double, c.train.sampler.augmentations.contrast_prob),
      WSISEG_FIELD("brightness_min", double, c.train.sampler.augmentations.brightness_min),
      WSISEG_FIELD("brightness_max", double, c.train.sampler.augmentations.brightness_max),
      WSISEG_FIELD("brightness_prob", double, c.train.sampler.augmentations.brightness_prob),
      WSISEG_FIELD("classifier_threshold", double, c.train.inference.classifier_threshold),
      WSISEG_FIELD("inference_batch_size", int, c.train.inference.batch_size),
      WSISEG_FIELD("stage_widths", std::vector<int>, c.arch.stage_widths),
      WSISEG_FIELD("decoder_widths", std::vector<int>, c.arch.decoder_widths),
      WSISEG_FIELD("head_kernel", int, c.arch.head_kernel),
      WSISEG_FIELD("synth_patients", int, c.synth.patients),
      WSISEG_FIELD("synth_per_patient", int, c.synth.per_patient),
      WSISEG_FIELD("synth_positive_fraction", double, c.synth.positive_fraction),
      WSISEG_FIELD("synth_base_px", int, c.synth.base_px),
      WSISEG_FIELD("synth_base_um", double, c.synth.base_um),
      WSISEG_FIELD("synth_levels", int, c.synth.levels),
      WSISEG_FIELD("synth_tile_size", int, c.synth.tile_size),
  };
  return table;
}

#undef WSISEG_FIELD

// Keeps the derived fields in step with the flat keys.
void normalize(ExperimentConfig& c) {
  c.train.multitask = c.mode == TaskMode::kMultitask;
  c.arch.classifier = c.train.multitask;
  c.arch.input_px = c.train.sampler.patch_px;
  c.train.sampler.target_um = c.train.resolution_um;
  c.train.sampler.seed = c.train.seed;
  if (c.train.label_criterion) c.train.sampler.label_criterion = *c.train.label_criterion;
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

// Runs fn, prefixing any failure with the stage and fold.
template <typename Fn>
auto staged(const std::string& stage, int fold, Fn&& fn) -> decltype(fn()) {
  const std::string where = "stage " + stage + (fold >= 0 ? " fold " + std::to_string(fold) : "");
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), where + ": " + one_line(e.what()));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kIo, where + ": " + one_line(e.what()));
  }
}

void write_summary(const std::filesystem::path& dir, const MetricsSummary& s, TaskMode mode,
                   double resolution_um) {
  json doc = summary_to_json(s);
  doc["mode"] = task_mode_name(mode);
  doc["resolution_um"] = resolution_um;
  write_file_atomic(dir / "summary.json", doc.dump(2) + "\n");
}

std::vector<SlideMetrics> metrics_of(const std::vector<MetricsRow>& rows) {
  std::vector<SlideMetrics> out;
  for (const auto& r : rows) out.push_back(r.metrics);
  return out;
}

MetricsRow score_slide(const SlideLevelData& data, const BinaryMask& pred, int fold, TaskMode mode,
                       double resolution_um) {
  MetricsRow row;
  row.metrics = evaluate_slide(data.slide.slide_id, pred,
                               resample_mask(data.annotation, data.choice.rescale),
                               resample_mask(data.tissue, data.choice.rescale));
  row.fold = fold;
  row.mode = std::string(task_mode_name(mode));
  row.resolution_um = resolution_um;
  return row;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (run_id.empty() || run_id.find('/') != std::string::npos)
    throw Error(ErrorCode::kConfig, "run_id must be a non-empty name without '/'");
  if (folds < 2) throw Error(ErrorCode::kConfig, "folds must be >= 2");
  if (mode == TaskMode::kMultitask && !train.label_criterion)
    throw Error(ErrorCode::kConfig, "mode multitask requires label_criterion");
  if (train.multitask != (mode == TaskMode::kMultitask) || arch.classifier != train.multitask ||
      arch.input_px != train.sampler.patch_px)
    throw Error(ErrorCode::kConfig, "derived fields out of sync; build configs with config_from_json");
  train.validate();
  arch.validate();
}

json config_to_json(const ExperimentConfig& c) {
  const auto& a = c.train.sampler.augmentations;
  json doc{{"dataset_dir", c.dataset_dir.string()},
           {"output_dir", c.output_dir.string()},
           {"run_id", c.run_id},
           {"mode", task_mode_name(c.mode)},
           {"label_criterion", c.train.label_criterion ? json(criterion_name(*c.train.label_criterion)) : json(nullptr)},
           {"folds", c.folds},
           {"resolution_um", c.train.resolution_um},
           {"epochs", c.train.epochs},
           {"steps_per_epoch", c.train.steps_per_epoch},
           {"batch_size", c.train.batch_size},
           {"learning_rate", c.train.adam.learning_rate},
           {"adam_beta1", c.train.adam.beta1},
           {"adam_beta2", c.train.adam.beta2},
           {"adam_eps", c.train.adam.eps},
           {"cls_weight", c.train.cls_weight},
           {"seed", c.train.seed},
           {"sampler_workers", c.train.sampler_workers},
           {"patch_px", c.train.sampler.patch_px},
           {"class_balance", c.train.sampler.class_balance},
           {"flip_h", a.flip_h},
           {"flip_v", a.flip_v},
           {"flip_prob", a.flip_prob},
           {"blur_max_sigma", a.blur_max_sigma},
           {"blur_prob", a.blur_prob},
           {"hue_shift", a.hue_shift},
           {"saturation_shift", a.saturation_shift},
           {"value_shift", a.value_shift},
           {"hsv_prob", a.hsv_prob},
           {"contrast_min", a.contrast_min},
           {"contrast_max", a.contrast_max},
           {"contrast_prob", a.contrast_prob},
           {"brightness_min", a.brightness_min},
           {"brightness_max", a.brightness_max},
           {"brightness_prob", a.brightness_prob},
           {"classifier_threshold", c.train.inference.classifier_threshold},
           {"inference_batch_size", c.train.inference.batch_size},
           {"stage_widths", c.arch.stage_widths},
           {"decoder_widths", c.arch.decoder_widths},
           {"head_kernel", c.arch.head_kernel},
           {"synth_patients", c.synth.patients},
           {"synth_per_patient", c.synth.per_patient},
           {"synth_positive_fraction", c.synth.positive_fraction},
           {"synth_base_px", c.synth.base_px},
           {"synth_base_um", c.synth.base_um},
           {"synth_levels", c.synth.levels},
           {"synth_tile_size", c.synth.tile_size}};
  return doc;
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : doc.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
    it->second(c, value, key);
  }
  normalize(c);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + one_line(e.what()));
  }
  return config_from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::kConfig, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  doc[key] = value.is_discarded() ? json(text) : value;
}

json summary_to_json(const MetricsSummary& s) {
  return {{"n_all", s.n_all},
          {"n_positive", s.n_positive},
          {"n_negative", s.n_negative},
          {"median_dice_all", s.median_dice_all},
          {"iqr_all", s.iqr_all},
          {"median_dice_pos", s.median_dice_pos},
          {"iqr_pos", s.iqr_pos},
          {"fp_pct_mean", s.fp_pct_mean},
          {"fp_pct_std", s.fp_pct_std},
          {"table", {{"median_dice", format_table_cell(s.median_dice_all, s.iqr_all)},
                     {"median_positive_dice", format_table_cell(s.median_dice_pos, s.iqr_pos)}}}};
}

std::string table_row(const std::string& run_id, const MetricsSummary& s) {
  char fp[64];
  std::snprintf(fp, sizeof fp, "%.2f +/- %.2f", s.fp_pct_mean, s.fp_pct_std);
  return "| " + run_id + " | " + format_table_cell(s.median_dice_all, s.iqr_all) + " | " +
         format_table_cell(s.median_dice_pos, s.iqr_pos) + " | " + fp + " |";
}

DatasetIndex synth_dataset(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const auto parent = std::filesystem::absolute(out_dir).parent_path();
  if (!std::filesystem::is_directory(parent))
    throw Error(ErrorCode::kIo, "output parent directory does not exist: " + parent.string());
  DatasetSpec spec;
  spec.n_patients = config.synth.patients;
  spec.slides_per_patient = config.synth.per_patient;
  spec.positive_fraction = config.synth.positive_fraction;
  spec.seed = config.train.seed;
  spec.slide_template.base_width = config.synth.base_px;
  spec.slide_template.base_height = config.synth.base_px;
  spec.slide_template.base_um_per_px = config.synth.base_um;
  spec.slide_template.n_levels = config.synth.levels;
  spec.slide_template.tile_size = config.synth.tile_size;
  return generate_dataset(spec, out_dir);
}

FoldManifest make_run_folds(const ExperimentConfig& config, const std::filesystem::path& out_path) {
  const auto slides = open_dataset(config.dataset_dir);
  FoldManifest m = make_folds(slides, config.folds, config.train.seed);
  write_fold_manifest(out_path, m);
  return m;
}

RunOutcome run_experiment(const ExperimentConfig& config, std::ostream* progress) {
  config.validate();
  RunOutcome out;
  out.run_dir = config.run_dir();
  const auto& dir = out.run_dir;
  staged("setup", -1, [&] {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "config.json", config_to_json(config).dump(2) + "\n");
  });
  const auto slides = staged("load", -1, [&] { return open_dataset(config.dataset_dir); });
  const FoldManifest manifest = staged("folds", -1, [&] {
    FoldManifest m = make_folds(slides, config.folds, config.train.seed);
    write_fold_manifest(dir / "folds.json", m);
    return m;
  });
  std::map<std::string, SlideLevelData> data;
  staged("prepare", -1, [&] {
    for (const auto& s : slides) data.emplace(s.slide_id, prepare_slide(s, config.train.resolution_um));
  });

  json run_doc{{"run_id", config.run_id}, {"dataset_hash", manifest.dataset_hash}};
  run_doc["folds"] = json::array();
  const auto pred_dir = dir / "predictions";
  for (const FoldEntry& fold : manifest.folds) {
    std::vector<const SlideLevelData*> train, val;
    for (const auto& id : fold.train_slide_ids) train.push_back(&data.at(id));
    for (const auto& id : fold.val_slide_ids) val.push_back(&data.at(id));
    if (progress) *progress << "fold " << fold.fold_id << ": training on " << train.size() << " slides\n";
    TrainResult trained = staged("train", fold.fold_id, [&] {
      return train_fold(config.train, config.arch, fold, train, val,
                        dir / ("fold_" + std::to_string(fold.fold_id)), manifest.dataset_hash);
    });
    FoldOutcome fo;
    fo.fold_id = fold.fold_id;
    fo.fingerprint = trained.model.fingerprint;
    fo.checksum = to_hex(parameter_checksum(trained.model.net));
    fo.epochs = trained.epochs;
    std::vector<MetricsRow> fold_rows;
    staged("infer", fold.fold_id, [&] {
      for (const SlideLevelData* d : val) {
        const SlidePrediction pred =
            predict_slide(trained.model.net, *d, config.mode, config.train.inference);
        const BinaryMask mask = binarize(pred.probability, d->choice.level);
        PredictionInfo info;
        info.slide_id = d->slide.slide_id;
        info.fingerprint = trained.model.fingerprint;
        info.mode = config.mode;
        info.resolution_um = config.train.resolution_um;
        info.level = d->choice.level;
        info.fold = fold.fold_id;
        write_prediction(pred_dir, info, mask);
        fold_rows.push_back(score_slide(*d, mask, fold.fold_id, config.mode, config.train.resolution_um));
      }
    });
    fo.summary = summarize(metrics_of(fold_rows));
    out.rows.insert(out.rows.end(), fold_rows.begin(), fold_rows.end());
    json epochs = json::array();
    for (const auto& e : fo.epochs)
      epochs.push_back({{"epoch", e.epoch}, {"mean_total_loss", e.mean_total_loss}, {"val_median_dice", e.val_median_dice}});
    run_doc["folds"].push_back({{"fold_id", fo.fold_id},
                                {"fingerprint", fo.fingerprint},
                                {"checksum", fo.checksum},
                                {"epochs", epochs},
                                {"summary", summary_to_json(fo.summary)}});
    if (progress)
      *progress << "fold " << fold.fold_id << ": median dice " << fo.summary.median_dice_all
                << ", positive " << fo.summary.median_dice_pos << "\n";
    out.folds.push_back(std::move(fo));
  }

  staged("metrics", -1, [&] {
    std::sort(out.rows.begin(), out.rows.end(),
              [](const MetricsRow& a, const MetricsRow& b) { return a.metrics.slide_id < b.metrics.slide_id; });
    out.summary = summarize(metrics_of(out.rows));
    write_metrics_csv(dir / "metrics.csv", out.rows);
    write_summary(dir, out.summary, config.mode, config.train.resolution_um);
    run_doc["summary"] = summary_to_json(out.summary);
    write_file_atomic(dir / "run.json", run_doc.dump(2) + "\n");
  });
  return out;
}

void infer_slides(const InferRequest& req) {
  ModelBundle model = load_checkpoint(req.checkpoint);
  const auto slides = open_dataset(req.dataset_dir);
  std::set<std::string> wanted(req.slide_ids.begin(), req.slide_ids.end());
  for (const auto& id : wanted) {
    const bool known = std::any_of(slides.begin(), slides.end(), [&](const auto& s) { return s.slide_id == id; });
    if (!known) throw Error(ErrorCode::kInvalidArgument, "unknown slide " + id);
  }
  for (const auto& s : slides) {
    if (!wanted.empty() && !wanted.count(s.slide_id)) continue;
    const SlideLevelData d = prepare_slide(s, req.resolution_um);
    const SlidePrediction pred = predict_slide(model.net, d, req.mode, req.options);
    PredictionInfo info;
    info.slide_id = s.slide_id;
    info.fingerprint = model.fingerprint;
    info.mode = req.mode;
    info.resolution_um = req.resolution_um;
    info.threshold = 0.5;
    info.level = d.choice.level;
    info.fold = req.fold;
    write_prediction(req.out_dir, info, binarize(pred.probability, d.choice.level));
  }
}

RunOutcome evaluate_predictions(const std::filesystem::path& predictions_dir,
                                const std::filesystem::path& dataset_dir,
                                const std::filesystem::path& out_dir) {
  auto slides = open_dataset(dataset_dir);
  std::sort(slides.begin(), slides.end(),
            [](const SlidePyramid& a, const SlidePyramid& b) { return a.slide_id < b.slide_id; });
  RunOutcome out;
  out.run_dir = out_dir;
  std::optional<TaskMode> mode;
  double resolution = 0.0;
  for (const auto& s : slides) {
    PredictionInfo info;
    const BinaryMask mask = read_prediction(predictions_dir, s.slide_id, &info);
    const SlideLevelData d = prepare_slide(s, info.resolution_um);
    if (mask.width() != d.annotation.width() && d.choice.rescale == 1.0)
      throw Error(ErrorCode::kDimensionMismatch, "prediction for " + s.slide_id + " has the wrong size");
    out.rows.push_back(score_slide(d, mask, info.fold, info.mode, info.resolution_um));
    if (!mode) {
      mode = info.mode;
      resolution = info.resolution_um;
    }
  }
  if (!mode) throw Error(ErrorCode::kInvalidArgument, "dataset lists no slides");
  out.summary = summarize(metrics_of(out.rows));
  std::filesystem::create_directories(out_dir);
  write_metrics_csv(out_dir / "metrics.csv", out.rows);
  write_summary(out_dir, out.summary, *mode, resolution);
  return out;
}

}  // namespace wsiseg
