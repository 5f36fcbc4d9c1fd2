#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tacbot/geometry.hpp"

namespace tacbot {

inline constexpr double kFloorZ = 0.0;
inline constexpr double kCeilingZ = 3.0;
inline constexpr double kPlayerRadius = 0.4;

class MapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Static 2.5D level: wall segments extruded from floor to ceiling, a
/// rectangular playable area, spawns, one bombsite and a waypoint graph.
struct MapGeometry {
  std::string name;
  Rect bounds;
  std::vector<Segment2> walls;
  Vec3 attacker_spawn;
  Vec3 defender_spawn;
  Rect bombsite;
  std::vector<Vec2> waypoints;
  std::vector<std::pair<int, int>> links;

  // Derived by finalize(): walls plus the four boundary edges, and
  // all-pairs shortest path lengths over the waypoint graph.
  std::vector<Segment2> solid;
  std::vector<std::vector<double>> path_length;

  void finalize();

  /// True when a disc of the given radius can sweep from a to b without
  /// touching any solid segment.
  bool clear_path(Vec2 a, Vec2 b, double clearance = kPlayerRadius) const;

  /// Next point to steer toward when travelling from `from` to `goal`
  /// along the shortest waypoint route. Returns `goal` itself when it is
  /// directly reachable.
  Vec2 steer_target(Vec2 from, Vec2 goal) const;

  /// Waypoint-route length from `from` to `goal`, +inf when unreachable.
  double route_length(Vec2 from, Vec2 goal) const;
};

MapGeometry load_map(std::string_view text);
MapGeometry load_map_file(const std::filesystem::path& path);

/// Text of a shipped map ("ascent_mini" or "open_room"); throws MapError
/// for unknown names.
std::string builtin_map_text(std::string_view name);

/// Accepts a built-in map name or a path to a map file.
MapGeometry resolve_map(std::string_view name_or_path);

/// Serializes a geometry back into the text format.
std::string map_to_text(const MapGeometry& map);

}  // namespace tacbot
