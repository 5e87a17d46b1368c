#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace hta {

enum class ClassLabel : int {
  Crying = 0,
  Screaming = 1,
  CarDoorBanging = 2,
  CarNoise = 3,
  Conversation = 4,
};

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "crying", "screaming", "car_door_banging", "car_noise", "conversation"};

constexpr std::string_view class_name(ClassLabel c) { return kClassNames[static_cast<std::size_t>(c)]; }
constexpr int class_id(ClassLabel c) { return static_cast<int>(c); }

constexpr std::optional<ClassLabel> label_from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kNumClasses)) return std::nullopt;
  return static_cast<ClassLabel>(id);
}

constexpr std::optional<ClassLabel> label_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == name) return static_cast<ClassLabel>(i);
  return std::nullopt;
}

/// Crying, screaming and door banging are trafficking-indicative; car noise
/// and conversation are benign.
constexpr bool is_ht_indicative(ClassLabel c) { return class_id(c) <= 2; }
constexpr bool is_ht_indicative(int id) { return id >= 0 && id <= 2; }

}  // namespace hta
