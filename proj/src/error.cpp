#include "disfluent/error.hpp"

namespace disfluent {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::Io: return "Io";
    case Errc::EmptyBuffer: return "EmptyBuffer";
    case Errc::LengthTooSmall: return "LengthTooSmall";
    case Errc::TooShort: return "TooShort";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::InvalidRate: return "InvalidRate";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NonScalarLoss: return "NonScalarLoss";
    case Errc::NumericalError: return "NumericalError";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownClass: return "UnknownClass";
    case Errc::TooFewSubjects: return "TooFewSubjects";
    case Errc::DegenerateLabels: return "DegenerateLabels";
    case Errc::NoPositives: return "NoPositives";
    case Errc::EmptyEvaluation: return "EmptyEvaluation";
    case Errc::MissingCheckpoint: return "MissingCheckpoint";
    case Errc::MissingFeatures: return "MissingFeatures";
  }
  return "Unknown";
}

namespace {

std::string format_message(Errc code, const std::string& message, std::optional<std::size_t> line) {
  std::string out(to_string(code));
  if (line) out += " (line " + std::to_string(*line) + ")";
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(Errc code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(format_message(code, message, line)), code_(code), line_(line) {}

}  // namespace disfluent
