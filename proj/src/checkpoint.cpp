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

#include "wsiseg/checkpoint.hpp"

#include <cstring>

#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"
#include "wsiseg/hash.hpp"

namespace wsiseg {

using nlohmann::json;

json architecture_to_json(const ArchitectureSpec& spec) {
  return {{"input_px", spec.input_px},
          {"input_channels", spec.input_channels},
          {"stage_widths", spec.stage_widths},
          {"decoder_widths", spec.decoder_widths},
          {"head_kernel", spec.head_kernel},
          {"classifier", spec.classifier}};
}

ArchitectureSpec architecture_from_json(const json& doc) {
  ArchitectureSpec spec;
  try {
    if (doc.contains("input_px")) spec.input_px = doc.at("input_px").get<int>();
    if (doc.contains("input_channels")) spec.input_channels = doc.at("input_channels").get<int>();
    if (doc.contains("stage_widths"))
      spec.stage_widths = doc.at("stage_widths").get<std::vector<int>>();
    if (doc.contains("decoder_widths"))
      spec.decoder_widths = doc.at("decoder_widths").get<std::vector<int>>();
    if (doc.contains("head_kernel")) spec.head_kernel = doc.at("head_kernel").get<int>();
    if (doc.contains("classifier")) spec.classifier = doc.at("classifier").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("architecture: ") + e.what());
  }
  return spec;
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  return path.string() + ".json";
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model, int epoch,
                     int fold) {
  const auto& p = model.net.params().values();
  const auto& b = model.net.buffers().values();
  std::string blob((p.size() + b.size()) * sizeof(float), '\0');
  std::memcpy(blob.data(), p.data(), p.size() * sizeof(float));
  std::memcpy(blob.data() + p.size() * sizeof(float), b.data(), b.size() * sizeof(float));
  write_file_atomic(path, blob);

  json doc{{"spec", architecture_to_json(model.spec)},
           {"fingerprint", model.fingerprint},
           {"epoch", epoch},
           {"fold", fold},
           {"parameter_count", p.size()},
           {"buffer_count", b.size()},
           {"checksum", to_hex(parameter_checksum(model.net))}};
  write_file_atomic(checkpoint_sidecar(path), doc.dump(2) + "\n");
}

namespace {

json read_sidecar(const std::filesystem::path& path) {
  const auto side = checkpoint_sidecar(path);
  try {
    return json::parse(read_file(side));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, side.string() + ": " + e.what());
  }
}

}  // namespace

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  const json doc = read_sidecar(path);
  CheckpointInfo info;
  try {
    info.spec = architecture_from_json(doc.at("spec"));
    info.fingerprint = doc.at("fingerprint").get<std::string>();
    info.epoch = doc.at("epoch").get<int>();
    info.fold = doc.at("fold").get<int>();
    info.checksum = std::stoull(doc.at("checksum").get<std::string>(), nullptr, 16);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, path.string() + ".json: " + e.what());
  }
  return info;
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  ModelBundle model(info.spec);
  model.fingerprint = info.fingerprint;
  auto& p = model.net.params().values();
  auto& b = model.net.buffers().values();
  const std::string blob = read_file(path);
  if (blob.size() != (p.size() + b.size()) * sizeof(float))
    throw Error(ErrorCode::kSchemaViolation,
                path.string() + ": blob size does not match the architecture");
  std::memcpy(p.data(), blob.data(), p.size() * sizeof(float));
  std::memcpy(b.data(), blob.data() + p.size() * sizeof(float), b.size() * sizeof(float));
  if (parameter_checksum(model.net) != info.checksum)
    throw Error(ErrorCode::kSchemaViolation, path.string() + ": checksum mismatch");
  return model;
}

}  // namespace wsiseg
