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
#ifndef EODISTORT_ERROR_HPP_
#define EODISTORT_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace eodistort {

enum class ErrorCode {
  kMissingFile,
  kMalformedRaster,
  kIoFailure,
  kDimensionMismatch,
  kIntensityOutOfRange,
  kInvalidSpec,
  kEmptySplit,
  kMalformedManifest,
  kMalformedConfig,
  kUnknownClass,
  kNoDefinedClasses,
  kExternalCommandFailed,
  kExternalTimeout,
  kMissingPrediction,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// the CLI can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // True for failures that originate in an external predictor process.
  bool is_external() const noexcept {
    return code_ == ErrorCode::kExternalCommandFailed ||
           code_ == ErrorCode::kExternalTimeout ||
           code_ == ErrorCode::kMissingPrediction;
  }

 private:
  ErrorCode code_;
};

}  // namespace eodistort

#endif  // EODISTORT_ERROR_HPP_
