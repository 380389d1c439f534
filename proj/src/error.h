// Copyright 2026 The bwx Authors
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

#ifndef BWX_ERROR_H_
#define BWX_ERROR_H_

#include <stdexcept>
#include <string>

namespace bwx {

enum class ErrorCode {
  kInvalidArgument,  // bad parameters, dimension mismatch, out-of-range values
  kIo,               // filesystem failures
  kFormat,           // malformed or unsupported file contents
  kCodec,            // external codec command failed
  kState,            // operation invalid in the current state
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string &message) {
  throw Error(code, message);
}

}  // namespace bwx

#endif  // BWX_ERROR_H_
