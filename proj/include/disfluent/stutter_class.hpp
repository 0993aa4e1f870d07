#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace disfluent {

/// The six disfluency types. Part-word repetition is deliberately absent.
enum class StutterClass : std::uint8_t {
  S,   // sound repetition
  W,   // word repetition
  PH,  // phrase repetition
  R,   // revision
  I,   // interjection
  PR,  // prolongation
};

inline constexpr std::size_t kStutterClassCount = 6;
inline constexpr std::array<StutterClass, kStutterClassCount> kStutterClasses{
    StutterClass::S, StutterClass::W, StutterClass::PH, StutterClass::R, StutterClass::I, StutterClass::PR};

constexpr std::size_t class_index(StutterClass c) { return static_cast<std::size_t>(c); }

constexpr std::string_view to_string(StutterClass c) {
  constexpr std::array<std::string_view, kStutterClassCount> names{"S", "W", "PH", "R", "I", "PR"};
  return names[class_index(c)];
}

constexpr std::string_view description(StutterClass c) {
  constexpr std::array<std::string_view, kStutterClassCount> names{
      "sound repetition", "word repetition", "phrase repetition", "revision", "interjection", "prolongation"};
  return names[class_index(c)];
}

constexpr std::optional<StutterClass> parse_stutter_class(std::string_view label) {
  for (StutterClass c : kStutterClasses) {
    if (to_string(c) == label) return c;
  }
  return std::nullopt;
}

}  // namespace disfluent
