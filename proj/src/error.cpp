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

#include "wsiseg/error.hpp"

namespace wsiseg {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kSchemaViolation: return "schema_violation";
    case ErrorCode::kLevelInconsistency: return "level_inconsistency";
    case ErrorCode::kNoSuchLevel: return "no_such_level";
    case ErrorCode::kResolutionTooFine: return "resolution_too_fine";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kEmptyTissue: return "empty_tissue";
    case ErrorCode::kPlacementFailed: return "placement_failed";
    case ErrorCode::kInvalidSpec: return "invalid_spec";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNonFiniteLoss: return "non_finite_loss";
    case ErrorCode::kMissingPrediction: return "missing_prediction";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace wsiseg
