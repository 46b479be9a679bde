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
#include <span>
#include <string>
#include <string_view>

namespace wsiseg {

/// Incremental 64-bit FNV-1a. Used for fingerprints and directory checksums,
/// not for anything security-relevant.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes);
  Fnv1a& update(std::string_view text);
  Fnv1a& update(std::uint64_t value);
  Fnv1a& update(double value);

  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

std::uint64_t hash_floats(std::span<const float> values);

/// Hash of every regular file under root: relative paths in sorted order
/// followed by their bytes.
std::uint64_t hash_directory(const std::filesystem::path& root);
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace wsiseg
