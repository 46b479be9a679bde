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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "wsiseg/simd/kernels.hpp"

namespace wsiseg::simd {
namespace {

const KernelTable& table_for(Isa isa) {
  return isa == Isa::kAvx2 ? avx2_kernels() : scalar_kernels();
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&table_for(detect_isa())};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() {
  if (const char* env = std::getenv("WSISEG_ISA")) {
    std::string requested(env);
    if (requested == "scalar") return Isa::kScalar;
    if (requested == "avx2" && cpu_supports(Isa::kAvx2)) return Isa::kAvx2;
  }
  return cpu_supports(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

const KernelTable& kernels() { return *active_table().load(); }

void select_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::runtime_error("instruction set not supported by this CPU: " +
                             std::string(isa_name(isa)));
  }
  active_table().store(&table_for(isa));
}

Isa active_isa() { return kernels().isa; }

}  // namespace wsiseg::simd
