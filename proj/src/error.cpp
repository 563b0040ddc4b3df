#include "cotmr/error.hpp"

namespace cotmr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::DanglingReference: return "DanglingReference";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::UnknownBenchmark: return "UnknownBenchmark";
    case ErrorKind::InvalidSize: return "InvalidSize";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::ParseFailure: return "ParseFailure";
    case ErrorKind::MissingMarker: return "MissingMarker";
    case ErrorKind::EmptyCaption: return "EmptyCaption";
    case ErrorKind::PayloadNotArray: return "PayloadNotArray";
    case ErrorKind::UnknownQuery: return "UnknownQuery";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::KOutOfRange: return "KOutOfRange";
    case ErrorKind::SubsetNotInGallery: return "SubsetNotInGallery";
    case ErrorKind::MissingRanking: return "MissingRanking";
    case ErrorKind::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace cotmr
