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
#include <string>
#include <vector>

#include "wsiseg/slide_store.hpp"

namespace wsiseg {

struct DatasetEntry {
  std::string slide_id;
  std::string patient_id;
  SlideLabel label = SlideLabel::kNegative;
  std::string manifest;  // relative to the dataset directory
};

/// Contents of `index.json` in a dataset directory.
struct DatasetIndex {
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> slides;
};

inline constexpr const char* kIndexName = "index.json";

void write_dataset_index(const std::filesystem::path& dataset_dir,
                         const DatasetIndex& index);
DatasetIndex read_dataset_index(const std::filesystem::path& dataset_dir);

/// Opens every slide listed in the index, in index order.
std::vector<SlidePyramid> open_dataset(const std::filesystem::path& dataset_dir);

/// Stable hash over (slide_id, patient_id, label) of every slide.
std::string dataset_hash(const std::vector<SlidePyramid>& slides);

}  // namespace wsiseg
