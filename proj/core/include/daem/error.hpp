// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace daem {

enum class ErrorKind {
  kShape,       // tensor or dimension mismatch
  kValidation,  // malformed input data or arguments
  kMissing,     // referenced file or artifact does not exist
  kChecksum,    // stored checksum disagrees with payload
  kNumerical,   // non-finite value where a finite one is required
  kIo,          // read/write failure
};

/// Single exception type for the library; `kind()` drives CLI exit codes and
/// HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace daem
