#pragma once

#include <cmath>
#include <numbers>

namespace tacbot {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

/// World-frame position in meters. z is height above the floor.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Vec3&) const = default;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec2 xy() const { return {x, y}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

struct Segment2 {
  Vec2 a;
  Vec2 b;
};

struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool contains(Vec2 p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  Vec2 center() const { return {(min_x + max_x) * 0.5, (min_y + max_y) * 0.5}; }
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Wraps an angle in degrees into [0, 360).
inline double wrap360(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

/// Wraps an angle in degrees into (-180, 180].
inline double wrap180(double deg) {
  double w = wrap360(deg);
  return w > 180.0 ? w - 360.0 : w;
}

/// Unit direction for a yaw (counter-clockwise from +x) and pitch (up positive), degrees.
inline Vec3 direction_from_angles(double yaw_deg, double pitch_deg) {
  const double yr = deg2rad(yaw_deg);
  const double pr = deg2rad(pitch_deg);
  return {std::cos(pr) * std::cos(yr), std::cos(pr) * std::sin(yr), std::sin(pr)};
}

/// Planar heading of v in degrees, [0, 360).
inline double heading_deg(Vec2 v) { return wrap360(rad2deg(std::atan2(v.y, v.x))); }

double point_segment_distance(Vec2 p, const Segment2& s);
double segment_segment_distance(const Segment2& s, const Segment2& t);
bool segments_intersect(const Segment2& s, const Segment2& t);

/// Parametric distance along a 2D ray (origin o, planar direction d, not
/// necessarily unit) to segment s, or a negative value when there is no hit.
double ray_segment_param(Vec2 o, Vec2 d, const Segment2& s);

}  // namespace tacbot
