/*
 * Copyright 2026 The leakscope Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "leakscope/error.h"

namespace leakscope {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kInvalidArgument: return "E_ARG";
    case ErrorCode::kStructure: return "E_STRUCTURE";
    case ErrorCode::kTruncated: return "E_TRUNCATED";
    case ErrorCode::kIntegrity: return "E_INTEGRITY";
    case ErrorCode::kSegmentation: return "E_SEGMENTATION";
    case ErrorCode::kDataset: return "E_DATASET";
    case ErrorCode::kStage: return "E_STAGE";
  }
  return "E_UNKNOWN";
}

ParseError::ParseError(std::string_view source, size_t line,
                       const std::string& what)
    : Error(ErrorCode::kParse,
            std::string(source) +
                (line ? ":" + std::to_string(line) : std::string()) + ": " +
                what),
      line_(line) {}

}  // namespace leakscope
