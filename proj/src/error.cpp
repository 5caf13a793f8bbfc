// SPDX-License-Identifier: Apache-2.0
#include "stst/error.hpp"

namespace stst {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "UsageError";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::SingularStainMatrix: return "SingularStainMatrix";
    case ErrorKind::LabelMismatch: return "LabelMismatch";
    case ErrorKind::InsufficientTissue: return "InsufficientTissue";
    case ErrorKind::DegenerateRank: return "DegenerateRank";
    case ErrorKind::DegenerateImage: return "DegenerateImage";
    case ErrorKind::NoRecordedForward: return "NoRecordedForward";
    case ErrorKind::NaNLoss: return "NaNLoss";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::ZeroMeanReference: return "ZeroMeanReference";
    case ErrorKind::FrameTooSmall: return "FrameTooSmall";
    case ErrorKind::NotEnoughPatches: return "NotEnoughPatches";
  }
  return "Error";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Config:
      return kExitUsage;
    case ErrorKind::NaNLoss:
    case ErrorKind::SingularStainMatrix:
    case ErrorKind::DegenerateRank:
    case ErrorKind::DegenerateImage:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

}  // namespace stst
