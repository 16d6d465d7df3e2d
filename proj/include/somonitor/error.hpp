#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace somonitor {

enum class Errc {
  InvalidArgument,
  // domain
  ZeroImpressions,
  ClicksExceedImpressions,
  InvalidThresholds,
  // ingest / store
  ParseError,
  ValidationError,
  DuplicateId,
  UnknownDataset,
  NotFound,
  // gateway
  MissingBinding,
  UnknownPlaceholder,
  BackendUnavailable,
  ResponseTooLong,
  AuthFailure,
  EmptyInput,
  // pillars
  ExtractionIncomplete,
  BatchFailureRateExceeded,
  // clustering
  TooFewPoints,
  AnnotationParseError,
  // ranking
  UnknownClassifier,
  MissingPerformance,
  PoolTooSmall,
  GroundingOverlap,
  UnparsableRanking,
  AllRunsFailed,
  // evaluation
  RTooLarge,
  CandidateMismatch,
  // story
  UnknownBrand,
  EmptyMatrix,
  BrandMissingFromNarrative,
  // service
  Conflict,
};

std::string_view to_string(Errc code);

// True for failures that originate in an LLM backend rather than in the input.
bool is_backend_failure(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, std::vector<std::string> details = {});

  Errc code() const noexcept { return code_; }
  // Offending fields, record lines, binding names, etc.
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  Errc code_;
  std::vector<std::string> details_;
};

}  // namespace somonitor
