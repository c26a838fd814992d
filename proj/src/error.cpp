/* Copyright 2026 The eodistort Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "eodistort/error.hpp"

namespace eodistort {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kMalformedRaster: return "MalformedRaster";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kIntensityOutOfRange: return "IntensityOutOfRange";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kMalformedManifest: return "MalformedManifest";
    case ErrorCode::kMalformedConfig: return "MalformedConfig";
    case ErrorCode::kUnknownClass: return "UnknownClass";
    case ErrorCode::kNoDefinedClasses: return "NoDefinedClasses";
    case ErrorCode::kExternalCommandFailed: return "ExternalCommandFailed";
    case ErrorCode::kExternalTimeout: return "ExternalTimeout";
    case ErrorCode::kMissingPrediction: return "MissingPrediction";
  }
  return "Unknown";
}

}  // namespace eodistort
