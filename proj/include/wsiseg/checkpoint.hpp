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

#include <json.hpp>

#include "wsiseg/segnet.hpp"

namespace wsiseg {

nlohmann::json architecture_to_json(const ArchitectureSpec& spec);
/// Missing keys keep their defaults; throws kSchemaViolation on bad types.
ArchitectureSpec architecture_from_json(const nlohmann::json& doc);

struct CheckpointInfo {
  ArchitectureSpec spec;
  std::string fingerprint;
  int epoch = 0;
  int fold = 0;
  std::uint64_t checksum = 0;
};

/// Writes `path` (raw little-endian float32 parameters followed by running
/// statistics) and `path`.json with the metadata. Both writes are atomic.
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model, int epoch,
                     int fold);
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);
/// Rebuilds the model and verifies sizes and checksum.
ModelBundle load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

}  // namespace wsiseg
