#include "scr/error.hpp"

namespace scr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::TooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyBuffer: return "EmptyBuffer";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewTracks: return "TooFewTracks";
    case ErrorCode::BothEstimatesFailed: return "BothEstimatesFailed";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

}  // namespace scr
