#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace disfluent {

enum class Errc {
  UnsupportedFormat,
  MalformedHeader,
  Io,
  EmptyBuffer,
  LengthTooSmall,
  TooShort,
  ShapeMismatch,
  BatchTooSmall,
  EmptySequence,
  InvalidRate,
  LabelOutOfRange,
  NonScalarLoss,
  NumericalError,
  InvalidConfig,
  ParseError,
  UnknownClass,
  TooFewSubjects,
  DegenerateLabels,
  NoPositives,
  EmptyEvaluation,
  MissingCheckpoint,
  MissingFeatures,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library. `code()` identifies the failure kind;
/// parse failures additionally carry the 1-based input line.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::optional<std::size_t> line = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  Errc code_;
  std::optional<std::size_t> line_;
};

}  // namespace disfluent
