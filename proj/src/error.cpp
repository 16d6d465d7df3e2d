#include "somonitor/error.hpp"

namespace somonitor {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ZeroImpressions: return "ZeroImpressions";
    case Errc::ClicksExceedImpressions: return "ClicksExceedImpressions";
    case Errc::InvalidThresholds: return "InvalidThresholds";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::UnknownDataset: return "UnknownDataset";
    case Errc::NotFound: return "NotFound";
    case Errc::MissingBinding: return "MissingBinding";
    case Errc::UnknownPlaceholder: return "UnknownPlaceholder";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::ResponseTooLong: return "ResponseTooLong";
    case Errc::AuthFailure: return "AuthFailure";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::ExtractionIncomplete: return "ExtractionIncomplete";
    case Errc::BatchFailureRateExceeded: return "BatchFailureRateExceeded";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::AnnotationParseError: return "AnnotationParseError";
    case Errc::UnknownClassifier: return "UnknownClassifier";
    case Errc::MissingPerformance: return "MissingPerformance";
    case Errc::PoolTooSmall: return "PoolTooSmall";
    case Errc::GroundingOverlap: return "GroundingOverlap";
    case Errc::UnparsableRanking: return "UnparsableRanking";
    case Errc::AllRunsFailed: return "AllRunsFailed";
    case Errc::RTooLarge: return "RTooLarge";
    case Errc::CandidateMismatch: return "CandidateMismatch";
    case Errc::UnknownBrand: return "UnknownBrand";
    case Errc::EmptyMatrix: return "EmptyMatrix";
    case Errc::BrandMissingFromNarrative: return "BrandMissingFromNarrative";
    case Errc::Conflict: return "Conflict";
  }
  return "Unknown";
}

bool is_backend_failure(Errc code) {
  switch (code) {
    case Errc::BackendUnavailable:
    case Errc::ResponseTooLong:
    case Errc::AuthFailure:
    case Errc::AllRunsFailed:
      return true;
    default:
      return false;
  }
}

Error::Error(Errc code, std::string message, std::vector<std::string> details)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      details_(std::move(details)) {}

}  // namespace somonitor
