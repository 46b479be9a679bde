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

#include "wsiseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wsiseg/checkpoint.hpp"
#include "wsiseg/dataset.hpp"
#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"
#include "wsiseg/hash.hpp"
#include "wsiseg/metrics.hpp"
#include "wsiseg/rng.hpp"

namespace wsiseg {

using nlohmann::json;

FoldManifest make_folds(const std::vector<SlidePyramid>& slides, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "k must be >= 2");
  std::map<std::string, std::vector<std::string>> by_patient;
  for (const auto& s : slides) by_patient[s.patient_id].push_back(s.slide_id);
  if (static_cast<int>(by_patient.size()) < k)
    throw Error(ErrorCode::kInvalidArgument, "fewer patients (" + std::to_string(by_patient.size()) +
                                                 ") than folds (" + std::to_string(k) + ")");
  std::vector<std::string> patients;
  for (const auto& [p, ids] : by_patient) patients.push_back(p);
  Rng rng(derive_seed(seed, 0xf01d));
  for (std::size_t i = patients.size() - 1; i > 0; --i)
    std::swap(patients[i], patients[rng.below(i + 1)]);

  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(k));
  for (const auto& p : patients) {
    auto smallest = std::min_element(groups.begin(), groups.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    for (const auto& id : by_patient[p]) smallest->push_back(id);
  }

  FoldManifest m;
  m.k = k;
  m.seed = seed;
  m.dataset_hash = dataset_hash(slides);
  std::vector<std::string> all;
  for (const auto& s : slides) all.push_back(s.slide_id);
  std::sort(all.begin(), all.end());
  for (int f = 0; f < k; ++f) {
    FoldEntry e;
    e.fold_id = f;
    e.val_slide_ids = groups[static_cast<std::size_t>(f)];
    std::sort(e.val_slide_ids.begin(), e.val_slide_ids.end());
    const std::set<std::string> val(e.val_slide_ids.begin(), e.val_slide_ids.end());
    for (const auto& id : all)
      if (!val.count(id)) e.train_slide_ids.push_back(id);
    m.folds.push_back(std::move(e));
  }
  return m;
}

void write_fold_manifest(const std::filesystem::path& path, const FoldManifest& manifest) {
  json doc{{"k", manifest.k}, {"seed", manifest.seed}, {"dataset_hash", manifest.dataset_hash}};
  doc["folds"] = json::array();
  for (const auto& f : manifest.folds)
    doc["folds"].push_back(
        {{"fold_id", f.fold_id}, {"train_slide_ids", f.train_slide_ids}, {"val_slide_ids", f.val_slide_ids}});
  write_file_atomic(path, doc.dump(2) + "\n");
}

FoldManifest read_fold_manifest(const std::filesystem::path& path) {
  FoldManifest m;
  try {
    const json doc = json::parse(read_file(path));
    m.k = doc.at("k").get<int>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.dataset_hash = doc.at("dataset_hash").get<std::string>();
    for (const auto& f : doc.at("folds")) {
      FoldEntry e;
      e.fold_id = f.at("fold_id").get<int>();
      e.train_slide_ids = f.at("train_slide_ids").get<std::vector<std::string>>();
      e.val_slide_ids = f.at("val_slide_ids").get<std::vector<std::string>>();
      m.folds.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, path.string() + ": " + e.what());
  }
  return m;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::kConfig, "epochs >= 1");
  if (steps_per_epoch < 1) throw Error(ErrorCode::kConfig, "steps_per_epoch >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "batch_size >= 1");
  if (!(resolution_um > 0.0)) throw Error(ErrorCode::kConfig, "resolution_um must be positive");
  if (multitask && !label_criterion)
    throw Error(ErrorCode::kConfig, "multitask mode needs label_criterion");
  if (sampler_workers < 1) throw Error(ErrorCode::kConfig, "sampler_workers >= 1");
  if (!(cls_weight >= 0.0)) throw Error(ErrorCode::kConfig, "cls_weight must be >= 0");
  sampler.validate();
}

std::string TrainConfig::canonical() const {
  std::ostringstream o;
  o.precision(17);
  const auto& a = sampler.augmentations;
  o << "resolution_um=" << resolution_um << ";epochs=" << epochs
    << ";steps_per_epoch=" << steps_per_epoch << ";batch_size=" << batch_size
    << ";lr=" << adam.learning_rate << ";beta1=" << adam.beta1 << ";beta2=" << adam.beta2
    << ";adam_eps=" << adam.eps << ";multitask=" << multitask << ";label_criterion="
    << (label_criterion ? criterion_name(*label_criterion) : "none") << ";cls_weight=" << cls_weight
    << ";seed=" << seed << ";workers=" << sampler_workers << ";patch_px=" << sampler.patch_px
    << ";class_balance=" << sampler.class_balance << ";aug=" << a.flip_h << a.flip_v << ','
    << a.flip_prob << ',' << a.blur_max_sigma << ',' << a.blur_prob << ',' << a.hue_shift << ','
    << a.saturation_shift << ',' << a.value_shift << ',' << a.hsv_prob << ',' << a.contrast_min
    << ',' << a.contrast_max << ',' << a.contrast_prob << ',' << a.brightness_min << ','
    << a.brightness_max << ',' << a.brightness_prob
    << ";cls_threshold=" << inference.classifier_threshold;
  return o.str();
}

std::string training_fingerprint(const ArchitectureSpec& spec, const TrainConfig& config,
                                 int fold_id, const std::string& dataset_hash) {
  Fnv1a h;
  h.update(spec.canonical()).update(config.canonical());
  h.update(static_cast<std::uint64_t>(fold_id)).update(dataset_hash);
  return h.hex();
}

std::pair<double, double> validation_dice(SegNet& net, const std::vector<const SlideLevelData*>& val,
                                          TaskMode mode, const InferenceOptions& options) {
  if (val.empty()) return {0.0, 0.0};
  std::vector<SlideMetrics> rows;
  for (const SlideLevelData* d : val) {
    const SlidePrediction pred = predict_slide(net, *d, mode, options);
    const BinaryMask mask = binarize(pred.probability, d->choice.level);
    rows.push_back(slide_dice(mask, resample_mask(d->annotation, d->choice.rescale)));
  }
  const MetricsSummary s = summarize(rows);
  return {s.median_dice_all, s.median_dice_pos};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void assemble(const std::vector<PatchSample>& batch, int channels, Tensor& x, Tensor& mask,
              std::vector<float>& labels) {
  const int n = static_cast<int>(batch.size());
  const int p = batch.front().size;
  const std::size_t plane = static_cast<std::size_t>(p) * p;
  x.reshape({n, channels, p, p});
  mask.reshape({n, 1, p, p});
  labels.resize(batch.size());
  for (int b = 0; b < n; ++b) {
    const PatchSample& s = batch[static_cast<std::size_t>(b)];
    std::memcpy(x.sample(b), s.image.data(), static_cast<std::size_t>(channels) * plane * sizeof(float));
    float* m = mask.sample(b);
    for (std::size_t i = 0; i < plane; ++i) m[i] = s.mask[i];
    labels[static_cast<std::size_t>(b)] = static_cast<float>(s.label);
  }
}

void dump_nonfinite(const std::filesystem::path& fold_dir, int step, int epoch,
                    const LossReport& r, const SegNet& net, const std::vector<PatchSample>& batch) {
  json doc{{"step", step},
           {"epoch", epoch},
           {"dice_loss", fmt(r.dice_loss)},
           {"bce_loss", fmt(r.bce_loss)},
           {"total_loss", fmt(r.total)}};
  doc["parameters"] = json::array();
  for (std::size_t i = 0; i < net.params().entries().size(); ++i) {
    const auto v = net.params().value(i);
    std::size_t bad = 0;
    double max_abs = 0.0;
    for (float x : v) {
      if (!std::isfinite(x)) ++bad;
      else max_abs = std::max(max_abs, static_cast<double>(std::abs(x)));
    }
    doc["parameters"].push_back(
        {{"name", net.params().entries()[i].name}, {"non_finite", bad}, {"max_abs", max_abs}});
  }
  doc["batch"] = json::array();
  for (const auto& s : batch)
    doc["batch"].push_back({{"slide_id", s.source.slide_id},
                            {"origin", {s.source.origin.x, s.source.origin.y}},
                            {"label", s.label}});
  write_file_atomic(fold_dir / "nonfinite_dump.json", doc.dump(2) + "\n");
}

}  // namespace

TrainResult train_fold(const TrainConfig& config, const ArchitectureSpec& spec,
                       const FoldEntry& fold, const std::vector<const SlideLevelData*>& train,
                       const std::vector<const SlideLevelData*>& val,
                       const std::filesystem::path& fold_dir, const std::string& dataset_hash) {
  config.validate();
  if (config.multitask && !spec.classifier)
    throw Error(ErrorCode::kConfig, "multitask training needs the classifier head");
  if (config.sampler.patch_px != spec.input_px)
    throw Error(ErrorCode::kConfig, "patch_px must equal the model input_px");
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, "fold has no training slides");

  const std::set<std::string> val_ids(fold.val_slide_ids.begin(), fold.val_slide_ids.end());
  for (const SlideLevelData* d : train)
    if (val_ids.count(d->slide.slide_id))
      throw Error(ErrorCode::kInvalidArgument, "validation slide " + d->slide.slide_id + " in training set");

  SamplerConfig sc = config.sampler;
  sc.target_um = config.resolution_um;
  sc.seed = derive_seed(config.seed, 0x2000 + static_cast<std::uint64_t>(fold.fold_id));
  sc.label_criterion = config.label_criterion.value_or(LabelCriterion::kCl1);
  PatchSampler sampler(train, sc, config.sampler_workers);

  TrainResult result{build_model(spec, derive_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(fold.fold_id))),
                     {}, {}, 0};
  ModelBundle& model = result.model;
  model.fingerprint = training_fingerprint(spec, config, fold.fold_id, dataset_hash);
  SegNet& net = model.net;
  Adam opt(config.adam, net.params().total());
  const TaskMode mode = config.multitask ? TaskMode::kMultitask : TaskMode::kSingle;

  std::filesystem::create_directories(fold_dir);
  std::string log = "step,epoch,dice_loss,bce_loss,total_loss\n";
  json epochs_doc = json::array();
  Tensor x, mask;
  std::vector<float> labels;
  LossGradients grads;
  int step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double sum_total = 0.0;
    for (int s = 0; s < config.steps_per_epoch; ++s) {
      ++step;
      const std::vector<PatchSample> batch = sampler.next_batch(config.batch_size);
      assemble(batch, spec.input_channels, x, mask, labels);
      net.params().zero_grad();
      net.forward(x, true);
      const LossReport r = total_loss(net.seg(), mask, net.cls(), labels, config.multitask, &grads,
                                      config.cls_weight);
      if (!std::isfinite(r.total)) {
        dump_nonfinite(fold_dir, step, epoch, r, net, batch);
        throw Error(ErrorCode::kNonFiniteLoss, "non-finite loss at step " + std::to_string(step) +
                                                   " of fold " + std::to_string(fold.fold_id));
      }
      net.backward(grads.d_seg, grads.d_cls);
      opt.step(net.params());
      sum_total += r.total;
      result.steps.push_back(r);
      log += std::to_string(step) + "," + std::to_string(epoch) + "," + fmt(r.dice_loss) + "," +
             fmt(r.bce_loss) + "," + fmt(r.total) + "\n";
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_total_loss = sum_total / config.steps_per_epoch;
    std::tie(rec.val_median_dice, rec.val_median_dice_pos) =
        validation_dice(net, val, mode, config.inference);
    result.epochs.push_back(rec);
    epochs_doc.push_back({{"epoch", epoch},
                          {"mean_total_loss", rec.mean_total_loss},
                          {"val_median_dice", rec.val_median_dice},
                          {"val_median_dice_positive", rec.val_median_dice_pos}});
    write_file_atomic(fold_dir / "train_log.csv", log);
    write_file_atomic(fold_dir / "epochs.json", epochs_doc.dump(2) + "\n");
    save_checkpoint(fold_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), model, epoch, fold.fold_id);
  }
  save_checkpoint(fold_dir / "final.ckpt", model, config.epochs, fold.fold_id);

  for (const auto& id : sampler.provenance())
    if (val_ids.count(id))
      throw Error(ErrorCode::kInvalidArgument, "validation slide " + id + " was sampled in training");
  result.patches_drawn = sampler.provenance().size();
  return result;
}

}  // namespace wsiseg
