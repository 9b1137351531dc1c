#include "shufflevar/error.hpp"

namespace shufflevar {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::UnbalancedDesign: return "UnbalancedDesign";
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::NoReplication: return "NoReplication";
    case ErrorCode::MissingBlocks: return "MissingBlocks";
    case ErrorCode::OddLength: return "OddLength";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::TrivialPermutation: return "TrivialPermutation";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NonStationary: return "NonStationary";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SizeGuard: return "SizeGuard";
    case ErrorCode::AllStartsFailed: return "AllStartsFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace shufflevar
