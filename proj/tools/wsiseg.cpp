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

// wsiseg command-line entry point.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wsiseg/error.hpp"
#include "wsiseg/experiment.hpp"
#include "wsiseg/fileio.hpp"

using namespace wsiseg;
using nlohmann::json;

namespace {

struct Globals {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

json config_doc(const std::string& path, const Globals& g) {
  json doc = json::object();
  if (!path.empty()) {
    try {
      doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, path + ": " + e.what());
    }
  }
  for (const auto& o : g.overrides) apply_override(doc, o);
  if (g.seed) doc["seed"] = *g.seed;
  return doc;
}

ExperimentConfig single_config(const Globals& g) {
  if (g.configs.size() > 1) throw Error(ErrorCode::kConfig, "this command takes at most one --config");
  return config_from_json(config_doc(g.configs.empty() ? "" : g.configs.front(), g));
}

void report(const Error& e) {
  std::string msg = e.what();
  for (char& c : msg)
    if (c == '\n') c = ' ';
  std::fprintf(stderr, "wsiseg: error[%s]: %s\n", std::string(error_code_name(e.code())).c_str(), msg.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-slide tumour segmentation experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.configs, "Experiment config (JSON); repeat for several runs");
  app.add_option("--seed", g.seed, "Root seed, overrides the config");
  app.add_option("--out", g.out, "Output location");
  app.add_option("--set", g.overrides, "Override a config key (key=value)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic slide dataset");
  std::optional<int> patients, per_patient, base_px;
  std::optional<double> positive_fraction;
  synth->add_option("--patients", patients);
  synth->add_option("--per-patient", per_patient);
  synth->add_option("--positive-fraction", positive_fraction);
  synth->add_option("--base-px", base_px);

  auto* folds = app.add_subcommand("folds", "Write the patient-grouped fold manifest");
  std::optional<int> k;
  folds->add_option("-k,--folds", k);

  auto* run = app.add_subcommand("run", "Cross-validated training, inference and metrics");

  auto* infer = app.add_subcommand("infer", "Predict slides with a checkpoint");
  InferRequest req;
  std::string mode = "single";
  infer->add_option("--checkpoint", req.checkpoint)->required();
  infer->add_option("--dataset", req.dataset_dir)->required();
  infer->add_option("--slide", req.slide_ids, "Slide id; repeat, default all");
  infer->add_option("--mode", mode);
  infer->add_option("--resolution", req.resolution_um);
  infer->add_option("--fold", req.fold);
  infer->add_option("--threshold", req.options.classifier_threshold);

  auto* eval = app.add_subcommand("eval", "Recompute metrics from stored predictions");
  std::string pred_dir, dataset_dir;
  eval->add_option("--predictions", pred_dir)->required();
  eval->add_option("--dataset", dataset_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::fprintf(stderr, "wsiseg: error[usage]: %s\n", msg.c_str());
    return 2;
  }

  try {
    if (*synth) {
      ExperimentConfig c = single_config(g);
      if (patients) c.synth.patients = *patients;
      if (per_patient) c.synth.per_patient = *per_patient;
      if (positive_fraction) c.synth.positive_fraction = *positive_fraction;
      if (base_px) c.synth.base_px = *base_px;
      const std::filesystem::path out = g.out ? std::filesystem::path(*g.out) : c.dataset_dir;
      const DatasetIndex index = synth_dataset(c, out);
      std::printf("wrote %zu slides to %s (hash %s)\n", index.slides.size(), out.string().c_str(),
                  dataset_hash(open_dataset(out)).c_str());
    } else if (*folds) {
      ExperimentConfig c = single_config(g);
      if (k) c.folds = *k;
      const std::filesystem::path out = g.out ? std::filesystem::path(*g.out) : c.run_dir() / "folds.json";
      const FoldManifest m = make_run_folds(c, out);
      for (const auto& f : m.folds)
        std::printf("fold %d: %zu train, %zu val\n", f.fold_id, f.train_slide_ids.size(), f.val_slide_ids.size());
    } else if (*run) {
      std::vector<std::string> paths = g.configs;
      if (paths.empty()) paths.push_back("");
      std::vector<std::string> rows;
      for (const auto& p : paths) {
        json doc = config_doc(p, g);
        if (g.out) doc["output_dir"] = *g.out;
        const ExperimentConfig c = config_from_json(doc);
        const RunOutcome r = run_experiment(c, &std::cout);
        std::printf("summary: %s\n", (r.run_dir / "summary.json").string().c_str());
        rows.push_back(table_row(c.run_id, r.summary));
      }
      std::printf("| experiment | median dice (IQR) | median positive dice (IQR) | FP tissue %% |\n");
      std::printf("|---|---|---|---|\n");
      for (const auto& row : rows) std::printf("%s\n", row.c_str());
    } else if (*infer) {
      req.mode = parse_task_mode(mode);
      req.out_dir = g.out ? std::filesystem::path(*g.out) : std::filesystem::path("predictions");
      infer_slides(req);
    } else if (*eval) {
      const std::filesystem::path out = g.out ? std::filesystem::path(*g.out) : std::filesystem::path(pred_dir);
      const RunOutcome r = evaluate_predictions(pred_dir, dataset_dir, out);
      std::printf("%s\n", summary_to_json(r.summary).dump(2).c_str());
    }
  } catch (const Error& e) {
    report(e);
    return 1;
  } catch (const std::exception& e) {
    report(Error(ErrorCode::kIo, e.what()));
    return 1;
  }
  return 0;
}
