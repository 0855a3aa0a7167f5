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

#ifndef LEAKSCOPE_ERROR_H_
#define LEAKSCOPE_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace leakscope {

// Machine-parsable error category. The CLI prints the code name verbatim.
enum class ErrorCode {
  kParse,
  kIo,
  kInvalidArgument,
  kStructure,
  kTruncated,
  kIntegrity,
  kSegmentation,
  kDataset,
  kStage,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Parse failure with a 1-based line number; line 0 means "not line-specific".
class ParseError : public Error {
 public:
  ParseError(std::string_view source, size_t line, const std::string& what);

  size_t line() const { return line_; }

 private:
  size_t line_;
};

}  // namespace leakscope

#endif  // LEAKSCOPE_ERROR_H_
