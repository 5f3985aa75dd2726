#include "protosure/errors.hpp"

namespace protosure {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TokenizerMismatch: return "TokenizerMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CorruptPayload: return "CorruptPayload";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::MissingBundle: return "MissingBundle";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnparseableAnswer: return "UnparseableAnswer";
    case ErrorCode::HttpFailure: return "HttpFailure";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::UnknownDatasetKind: return "UnknownDatasetKind";
  }
  return "Unknown";
}

}  // namespace protosure
