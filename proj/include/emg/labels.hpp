#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

#include "emg/errors.hpp"

namespace emg {

/// The six grasp classes. The numeric values are the class indices used
/// everywhere (network outputs, confusion matrix rows/columns).
enum class ClassLabel : int {
  Cylindrical = 0,
  Tip = 1,
  Lateral = 2,
  Hook = 3,
  Palmar = 4,
  Spherical = 5,
};

inline constexpr std::size_t kNumClasses = 6;

inline constexpr std::array<char, kNumClasses> kLabelChars = {'C', 'T', 'L', 'H', 'P', 'S'};

inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels = {
    ClassLabel::Cylindrical, ClassLabel::Tip,    ClassLabel::Lateral,
    ClassLabel::Hook,        ClassLabel::Palmar, ClassLabel::Spherical};

constexpr std::size_t index_of(ClassLabel l) noexcept { return static_cast<std::size_t>(l); }

constexpr char to_char(ClassLabel l) noexcept { return kLabelChars[index_of(l)]; }

inline ClassLabel label_from_index(std::size_t i) {
  if (i >= kNumClasses)
    throw DataError("class index out of range: " + std::to_string(i));
  return static_cast<ClassLabel>(i);
}

constexpr std::optional<ClassLabel> parse_label(std::string_view s) noexcept {
  if (s.size() != 1)
    return std::nullopt;
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kLabelChars[i] == s[0])
      return static_cast<ClassLabel>(i);
  return std::nullopt;
}

} // namespace emg
