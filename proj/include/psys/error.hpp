#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace psys {

enum class Errc {
  kInvalidConfig,
  kMissingColumn,
  kUnknownLevel,
  kNonNumericFeature,
  kMissingValue,
  kInvalidLabel,
  kEmptySplit,
  kInsufficientData,
  kShapeMismatch,
  kUndefinedMetric,
  kPartialInput,
  kNonTruthfulReport,
  kTooManyAttributes,
  kInvalidArtifact,
  kInvalidArgument,
};

std::string_view errc_name(Errc code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace psys
