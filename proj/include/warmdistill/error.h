// Copyright 2026 The Warmdistill Authors.
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

#ifndef WARMDISTILL_ERROR_H_
#define WARMDISTILL_ERROR_H_

#include <stdexcept>
#include <string>

namespace wd {

enum class ErrorCode {
  kOk = 0,
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kContextOverflow,
  kIo,
  kParse,
  kState,
  kNotFound,
  kInternal,
};

const char* ErrorCodeName(ErrorCode code);

// All failures inside the library are reported as wd::Error. The C API maps
// the code onto wd_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace wd

#endif  // WARMDISTILL_ERROR_H_
