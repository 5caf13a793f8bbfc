// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stst {

enum class ErrorKind {
  Usage,
  Io,
  Format,
  DimensionMismatch,
  ShapeMismatch,
  Config,
  SingularStainMatrix,
  LabelMismatch,
  InsufficientTissue,
  DegenerateRank,
  DegenerateImage,
  NoRecordedForward,
  NaNLoss,
  TooSmall,
  ConstantInput,
  ZeroMeanReference,
  FrameTooSmall,
  NotEnoughPatches,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the toolkit; `kind()` carries the contract error.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

int exit_code_for(ErrorKind kind);

}  // namespace stst
