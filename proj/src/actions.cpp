#include "tacbot/actions.hpp"

#include <cmath>
#include <string>

namespace tacbot {

int nearest_angle_index(std::span<const double> angles, double value) {
  int best = 0;
  double best_err = std::abs(angles[0] - value);
  for (int i = 1; i < static_cast<int>(angles.size()); ++i) {
    const double err = std::abs(angles[i] - value);
    if (err < best_err || (err == best_err && std::abs(angles[i]) < std::abs(angles[best]))) {
      best = i;
      best_err = err;
    }
  }
  return best;
}

AimAngles aim_index_to_angles(int index) {
  if (index < 0 || index >= kNumAimActions)
    throw std::out_of_range("aim index " + std::to_string(index) + " outside [0, 165)");
  const int p = index / static_cast<int>(kYawAngles.size());
  const int y = index % static_cast<int>(kYawAngles.size());
  return {kPitchActionAngles[p], kYawAngles[y]};
}

AimAction angles_to_aim_index(double pitch_delta, double yaw_delta) {
  const int p = nearest_angle_index(kPitchActionAngles, pitch_delta);
  const int y = nearest_angle_index(kYawAngles, yaw_delta);
  return {p * static_cast<int>(kYawAngles.size()) + y};
}

}  // namespace tacbot
