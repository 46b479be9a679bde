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

#include "wsiseg/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>

#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"
#include "wsiseg/hash.hpp"

namespace wsiseg {

using nlohmann::json;

void write_dataset_index(const std::filesystem::path& dataset_dir,
                         const DatasetIndex& index) {
  json doc;
  doc["seed"] = index.seed;
  doc["slides"] = json::array();
  for (const auto& e : index.slides) {
    doc["slides"].push_back({{"slide_id", e.slide_id},
                             {"patient_id", e.patient_id},
                             {"label", slide_label_name(e.label)},
                             {"manifest", e.manifest}});
  }
  std::filesystem::create_directories(dataset_dir);
  const auto path = dataset_dir / kIndexName;
  write_file_atomic(path, doc.dump(2) + "\n");
}

DatasetIndex read_dataset_index(const std::filesystem::path& dataset_dir) {
  const auto path = dataset_dir / kIndexName;
  if (!std::filesystem::is_regular_file(path))
    throw Error(ErrorCode::kMissingFile, "missing dataset index: " + path.string());
  json doc;
  try {
    std::ifstream in(path);
    doc = json::parse(in);
    DatasetIndex index;
    index.seed = doc.value("seed", std::uint64_t{0});
    std::set<std::string> seen;
    for (const auto& s : doc.at("slides")) {
      DatasetEntry e;
      e.slide_id = s.at("slide_id").get<std::string>();
      e.patient_id = s.at("patient_id").get<std::string>();
      const auto label = s.at("label").get<std::string>();
      if (label != "positive" && label != "negative")
        throw Error(ErrorCode::kSchemaViolation, "bad label in " + path.string());
      e.label = label == "positive" ? SlideLabel::kPositive : SlideLabel::kNegative;
      e.manifest = s.at("manifest").get<std::string>();
      if (!seen.insert(e.slide_id).second)
        throw Error(ErrorCode::kSchemaViolation,
                    "duplicate slide_id " + e.slide_id + " in " + path.string());
      index.slides.push_back(std::move(e));
    }
    return index;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation,
                "schema violation in " + path.string() + ": " + e.what());
  }
}

std::vector<SlidePyramid> open_dataset(const std::filesystem::path& dataset_dir) {
  const DatasetIndex index = read_dataset_index(dataset_dir);
  std::vector<SlidePyramid> slides;
  slides.reserve(index.slides.size());
  for (const auto& e : index.slides) {
    SlidePyramid slide = open_slide(dataset_dir / e.manifest);
    if (slide.slide_id != e.slide_id || slide.patient_id != e.patient_id ||
        slide.label != e.label)
      throw Error(ErrorCode::kSchemaViolation,
                  "index entry for " + e.slide_id + " disagrees with its manifest");
    slides.push_back(std::move(slide));
  }
  return slides;
}

std::string dataset_hash(const std::vector<SlidePyramid>& slides) {
  std::vector<const SlidePyramid*> sorted;
  for (const auto& s : slides) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->slide_id < b->slide_id; });
  Fnv1a h;
  for (const auto* s : sorted) {
    h.update(s->slide_id).update(std::string_view("\x1f"));
    h.update(s->patient_id).update(std::string_view("\x1f"));
    h.update(slide_label_name(s->label)).update(std::string_view("\x1e"));
  }
  return h.hex();
}

}  // namespace wsiseg
