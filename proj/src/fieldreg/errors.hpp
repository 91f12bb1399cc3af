// Copyright 2026 The fieldreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace fieldreg {

enum class ErrorCode {
  kInvalidArgument = 1,
  kOutOfRange,
  kParallelRays,
  kInsufficientViews,
  kDegenerateConfiguration,
  kNonFiniteDensity,
  kNoCameras,
  kEmptySampleSet,
  kEmptyKeypoints,
  kNonPositivePrediction,
  kDegenerateField,
  kEmptyMesh,
  kZeroDiameter,
  kNonFiniteLoss,
  kMalformedManifest,
  kIo,
  kKeypointMismatch,
  kConflict,
};

// All library failures surface as this exception; the C API maps code() onto
// its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kParallelRays: return "ParallelRays";
    case ErrorCode::kInsufficientViews: return "InsufficientViews";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kNonFiniteDensity: return "NonFiniteDensity";
    case ErrorCode::kNoCameras: return "NoCameras";
    case ErrorCode::kEmptySampleSet: return "EmptySampleSet";
    case ErrorCode::kEmptyKeypoints: return "EmptyKeypoints";
    case ErrorCode::kNonPositivePrediction: return "NonPositivePrediction";
    case ErrorCode::kDegenerateField: return "DegenerateField";
    case ErrorCode::kEmptyMesh: return "EmptyMesh";
    case ErrorCode::kZeroDiameter: return "ZeroDiameter";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kMalformedManifest: return "MalformedManifest";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kKeypointMismatch: return "KeypointMismatch";
    case ErrorCode::kConflict: return "Conflict";
  }
  return "Unknown";
}

}  // namespace fieldreg
