#include "tacbot/geometry.hpp"

#include <algorithm>

namespace tacbot {

double point_segment_distance(Vec2 p, const Segment2& s) {
  const Vec2 e = s.b - s.a;
  const double len2 = e.dot(e);
  if (len2 <= 0.0) return (p - s.a).norm();
  const double u = std::clamp((p - s.a).dot(e) / len2, 0.0, 1.0);
  return (p - (s.a + e * u)).norm();
}

bool segments_intersect(const Segment2& s, const Segment2& t) {
  auto orient = [](Vec2 a, Vec2 b, Vec2 c) { return (b - a).cross(c - a); };
  auto on_segment = [](Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
  };
  const double d1 = orient(t.a, t.b, s.a);
  const double d2 = orient(t.a, t.b, s.b);
  const double d3 = orient(s.a, s.b, t.a);
  const double d4 = orient(s.a, s.b, t.b);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(t.a, t.b, s.a)) return true;
  if (d2 == 0 && on_segment(t.a, t.b, s.b)) return true;
  if (d3 == 0 && on_segment(s.a, s.b, t.a)) return true;
  if (d4 == 0 && on_segment(s.a, s.b, t.b)) return true;
  return false;
}

double segment_segment_distance(const Segment2& s, const Segment2& t) {
  if (segments_intersect(s, t)) return 0.0;
  return std::min({point_segment_distance(s.a, t), point_segment_distance(s.b, t),
                   point_segment_distance(t.a, s), point_segment_distance(t.b, s)});
}

double ray_segment_param(Vec2 o, Vec2 d, const Segment2& s) {
  const Vec2 e = s.b - s.a;
  const double denom = d.cross(e);
  if (std::abs(denom) < 1e-15) return -1.0;
  const Vec2 ao = s.a - o;
  const double t = ao.cross(e) / denom;
  const double u = ao.cross(d) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return -1.0;
  return t;
}

}  // namespace tacbot
