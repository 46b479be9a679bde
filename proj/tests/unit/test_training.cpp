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

#include <map>
#include <set>

#include "test_util.hpp"
#include "wsiseg/checkpoint.hpp"
#include "wsiseg/dataset.hpp"
#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"
#include "wsiseg/synthdata.hpp"
#include "wsiseg/training.hpp"

using namespace wsiseg;
using wsiseg::testing::TempDir;

namespace {

std::vector<SlidePyramid> fake_slides(int patients, int per_patient) {
  std::vector<SlidePyramid> out;
  for (int p = 0; p < patients; ++p)
    for (int s = 0; s < per_patient; ++s) {
      SlidePyramid sp;
      sp.patient_id = "patient_" + std::to_string(p);
      sp.slide_id = sp.patient_id + "_s" + std::to_string(s);
      sp.label = p == 0 ? SlideLabel::kNegative : SlideLabel::kPositive;
      out.push_back(sp);
    }
  return out;
}

void check_partition(const std::vector<SlidePyramid>& slides, const FoldManifest& m) {
  std::map<std::string, std::string> patient_of;
  for (const auto& s : slides) patient_of[s.slide_id] = s.patient_id;
  std::multiset<std::string> all_val;
  for (const FoldEntry& f : m.folds) {
    std::set<std::string> train_patients;
    for (const auto& id : f.train_slide_ids) train_patients.insert(patient_of.at(id));
    for (const auto& id : f.val_slide_ids) {
      REQUIRE_FALSE(train_patients.count(patient_of.at(id)));
      all_val.insert(id);
    }
    REQUIRE(f.train_slide_ids.size() + f.val_slide_ids.size() == slides.size());
  }
  REQUIRE(all_val.size() == slides.size());
  for (const auto& s : slides) REQUIRE(all_val.count(s.slide_id) == 1);
}

struct SmallDataset {
  TempDir dir{"train"};
  std::vector<SlidePyramid> slides;
  std::map<std::string, SlideLevelData> data;

  SmallDataset() {
    DatasetSpec spec;
    spec.n_patients = 5;
    spec.slides_per_patient = 2;
    spec.positive_fraction = 0.8;
    spec.seed = 21;
    spec.slide_template.base_width = spec.slide_template.base_height = 512;
    generate_dataset(spec, dir.path() / "ds");
    slides = open_dataset(dir.path() / "ds");
    for (const auto& s : slides) data.emplace(s.slide_id, prepare_slide(s, 15.56));
  }

  std::pair<std::vector<const SlideLevelData*>, std::vector<const SlideLevelData*>> split(const FoldEntry& f) const {
    std::vector<const SlideLevelData*> tr, va;
    for (const auto& id : f.train_slide_ids) tr.push_back(&data.at(id));
    for (const auto& id : f.val_slide_ids) va.push_back(&data.at(id));
    return {tr, va};
  }
};

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 5;
  c.steps_per_epoch = 50;
  c.batch_size = 8;
  c.seed = 3;
  c.sampler.patch_px = 32;
  return c;
}

ArchitectureSpec small_spec() {
  ArchitectureSpec s;
  s.input_px = 32;
  return s;
}

}  // namespace

TEST_CASE("folds for 10 patients x 2 slides") {
  const auto slides = fake_slides(10, 2);
  const FoldManifest m = make_folds(slides, 5, 7);
  REQUIRE(m.folds.size() == 5);
  for (const FoldEntry& f : m.folds) {
    CHECK(f.val_slide_ids.size() == 4);
    CHECK(f.train_slide_ids.size() == 16);
  }
  check_partition(slides, m);
  CHECK(m.dataset_hash == dataset_hash(slides));
}

TEST_CASE("folds for 29 patients x 2 slides keep the validation share near 1/5") {
  const auto slides = fake_slides(29, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FoldManifest m = make_folds(slides, 5, seed);
    check_partition(slides, m);
    for (const FoldEntry& f : m.folds) {
      const double share = static_cast<double>(f.val_slide_ids.size()) / 58.0;
      CHECK(share >= 0.17);
      CHECK(share <= 0.24);
    }
  }
}

TEST_CASE("fold partition properties on uneven patients") {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    std::vector<SlidePyramid> slides;
    const int patients = 5 + static_cast<int>(rng.below(20));
    for (int p = 0; p < patients; ++p) {
      const int n = 1 + static_cast<int>(rng.below(4));
      for (int s = 0; s < n; ++s) {
        SlidePyramid sp;
        sp.patient_id = "p" + std::to_string(p);
        sp.slide_id = sp.patient_id + "_" + std::to_string(s);
        slides.push_back(sp);
      }
    }
    const FoldManifest m = make_folds(slides, 5, rng.next_u64());
    check_partition(slides, m);
  }
  CHECK_THROWS_AS(make_folds(fake_slides(3, 2), 5, 0), Error);
}

TEST_CASE("fold manifest round trip and determinism") {
  TempDir dir("folds");
  const auto slides = fake_slides(12, 2);
  const FoldManifest m = make_folds(slides, 5, 99);
  write_fold_manifest(dir.path() / "folds.json", m);
  const FoldManifest back = read_fold_manifest(dir.path() / "folds.json");
  CHECK(back.k == 5);
  CHECK(back.seed == 99);
  CHECK(back.dataset_hash == m.dataset_hash);
  REQUIRE(back.folds.size() == m.folds.size());
  for (std::size_t i = 0; i < m.folds.size(); ++i) {
    CHECK(back.folds[i].val_slide_ids == m.folds[i].val_slide_ids);
    CHECK(back.folds[i].train_slide_ids == m.folds[i].train_slide_ids);
  }
  CHECK(make_folds(slides, 5, 99).folds[2].val_slide_ids == m.folds[2].val_slide_ids);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.epochs = 0;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("epochs >= 1") != std::string::npos);
  }
  c = TrainConfig{};
  c.multitask = true;
  CHECK_THROWS_AS(c.validate(), Error);
  c.label_criterion = LabelCriterion::kCl2;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("training lowers the loss, is deterministic and never samples validation slides") {
  SmallDataset ds;
  const FoldManifest m = make_folds(ds.slides, 5, 3);
  const auto [train, val] = ds.split(m.folds[0]);
  TempDir out("trainrun");
  const TrainConfig config = small_config();
  const TrainResult a = train_fold(config, small_spec(), m.folds[0], train, val, out.path() / "a", m.dataset_hash);
  REQUIRE(a.epochs.size() == 5);
  CHECK(a.epochs.back().mean_total_loss < a.epochs.front().mean_total_loss);
  CHECK(a.patches_drawn == 5u * 50u * 8u);
  CHECK(std::filesystem::exists(out.path() / "a" / "epoch_3.ckpt"));
  CHECK(std::filesystem::exists(out.path() / "a" / "final.ckpt"));
  CHECK(std::filesystem::exists(out.path() / "a" / "epochs.json"));
  const std::string log = read_file(out.path() / "a" / "train_log.csv");
  CHECK(log.rfind("step,epoch,dice_loss,bce_loss,total_loss\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 251);

  TrainConfig shorter = config;
  shorter.epochs = 2;
  const TrainResult b = train_fold(shorter, small_spec(), m.folds[0], train, val, out.path() / "b", m.dataset_hash);
  const TrainResult c = train_fold(shorter, small_spec(), m.folds[0], train, val, out.path() / "c", m.dataset_hash);
  CHECK(b.model.fingerprint == c.model.fingerprint);
  CHECK(parameter_checksum(b.model.net) == parameter_checksum(c.model.net));
  CHECK(read_file(out.path() / "b" / "train_log.csv") == read_file(out.path() / "c" / "train_log.csv"));
  CHECK(b.model.fingerprint != a.model.fingerprint);

  // The final checkpoint reloads to the same weights.
  const ModelBundle reloaded = load_checkpoint(out.path() / "b" / "final.ckpt");
  CHECK(parameter_checksum(reloaded.net) == parameter_checksum(b.model.net));
  CHECK(reloaded.fingerprint == b.model.fingerprint);

  // A validation slide handed to the trainer is refused.
  std::vector<const SlideLevelData*> leaky = train;
  leaky.push_back(val.front());
  CHECK_THROWS_AS(train_fold(shorter, small_spec(), m.folds[0], leaky, val, out.path() / "d", m.dataset_hash), Error);
}

TEST_CASE("multitask training needs the classifier head") {
  SmallDataset ds;
  const FoldManifest m = make_folds(ds.slides, 5, 3);
  const auto [train, val] = ds.split(m.folds[1]);
  TempDir out("trainmt");
  TrainConfig config = small_config();
  config.epochs = 1;
  config.steps_per_epoch = 5;
  config.multitask = true;
  config.label_criterion = LabelCriterion::kCl1;
  CHECK_THROWS_AS(train_fold(config, small_spec(), m.folds[1], train, val, out.path(), m.dataset_hash), Error);
  ArchitectureSpec spec = small_spec();
  spec.classifier = true;
  const TrainResult r = train_fold(config, spec, m.folds[1], train, val, out.path(), m.dataset_hash);
  CHECK(r.steps.front().bce_loss > 0.0);
}
