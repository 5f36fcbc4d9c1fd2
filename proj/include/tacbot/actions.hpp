#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace tacbot {

/// Range-finder yaw offsets in degrees (also the yaw action set).
inline constexpr std::array<double, 15> kYawAngles = {70, 45, 20, 10, 6, 3, 1, 0,
                                                      -1, -3, -6, -10, -20, -45, -70};
/// Range-finder pitch offsets in degrees.
inline constexpr std::array<double, 15> kPitchSensorAngles = {45, 30, 20, 10, 6, 3, 1, 0,
                                                              -1, -3, -6, -10, -20, -30, -45};
/// Pitch action set: the sensor pitches with the outermost pairs removed.
inline constexpr std::array<double, 11> kPitchActionAngles = {20, 10, 6, 3, 1, 0,
                                                              -1, -3, -6, -10, -20};

inline constexpr int kNumAimActions = 165;  // 11 pitch x 15 yaw
inline constexpr int kNumKeys = 11;
inline constexpr int kNoOpAimIndex = 82;  // (0 deg, 0 deg)

enum class Key : int { W = 0, A, S, D, Space, Key4, G, R, Q, E, LeftClick };

/// Pitch-major index into the 11 x 15 aim grid: index = pitch_row * 15 + yaw_col.
struct AimAction {
  int index = kNoOpAimIndex;
  bool operator==(const AimAction&) const = default;
};

/// Key flags in the fixed serialization order W, A, S, D, Space, 4, G, R,
/// Q, E, LeftClick (bits 0..10).
struct KeyAction {
  std::uint16_t bits = 0;

  bool pressed(Key k) const { return (bits >> static_cast<int>(k)) & 1U; }
  void set(Key k, bool on = true) {
    const auto mask = static_cast<std::uint16_t>(1U << static_cast<int>(k));
    bits = on ? static_cast<std::uint16_t>(bits | mask) : static_cast<std::uint16_t>(bits & ~mask);
  }
  bool operator==(const KeyAction&) const = default;
};

struct Action {
  AimAction aim;
  KeyAction keys;
  bool operator==(const Action&) const = default;
};

struct AimAngles {
  double pitch_delta = 0.0;
  double yaw_delta = 0.0;
};

/// Throws std::out_of_range for an index outside [0, 165).
AimAngles aim_index_to_angles(int index);

/// Snaps each axis independently to the nearest action angle (ties go to
/// the smaller magnitude; values beyond the extremes saturate).
AimAction angles_to_aim_index(double pitch_delta, double yaw_delta);

/// Index of the nearest entry of a strictly decreasing, zero-symmetric
/// angle list; ties resolve toward the entry closer to zero.
int nearest_angle_index(std::span<const double> angles, double value);

}  // namespace tacbot
