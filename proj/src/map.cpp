#include "tacbot/map.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

namespace tacbot {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const char* kAscentMini = R"(# Compact two-lane layout: attackers spawn west, defenders north-east,
# bombsite in the south-east corner behind a divider wall.
name ascent_mini
bounds 0 0 60 40
attacker_spawn 5 20
defender_spawn 54 34
bombsite 40 4 54 16

# west divider with a mid door (y 13..17) and a top door (y 27..31)
wall 18 0 18 13
wall 18 17 18 27
wall 18 31 18 40
# divider between the north lane and the site
wall 28 22 48 22
# mid crate
wall 30 8 34 8
wall 34 8 34 12
wall 34 12 30 12
wall 30 12 30 8
# site crate
wall 44 5 46 5
wall 46 5 46 7
wall 46 7 44 7
wall 44 7 44 5

waypoint 5 20
waypoint 12 15
waypoint 12 29
waypoint 22 15
waypoint 22 29
waypoint 25 19
waypoint 27 5
waypoint 38 14
waypoint 48 12
waypoint 38 27
waypoint 52 27
waypoint 54 34
waypoint 54 19
waypoint 41 9

link 0 1
link 0 2
link 1 3
link 2 4
link 3 5
link 3 6
link 4 5
link 4 9
link 5 7
link 6 13
link 7 8
link 7 13
link 8 13
link 8 12
link 12 10
link 10 11
link 9 10
)";

const char* kOpenRoom = R"(# Empty 40 x 40 m room.
name open_room
bounds 0 0 40 40
attacker_spawn 5 20
defender_spawn 35 35
bombsite 28 14 36 26
)";

[[noreturn]] void fail(int line, const std::string& msg) {
  throw MapError("map line " + std::to_string(line) + ": " + msg);
}

std::vector<double> read_numbers(std::istringstream& in, std::size_t count, int line,
                                 const std::string& key) {
  std::vector<double> out(count);
  for (auto& v : out) {
    if (!(in >> v)) fail(line, "'" + key + "' expects " + std::to_string(count) + " numbers");
  }
  std::string extra;
  if (in >> extra) fail(line, "unexpected token '" + extra + "' after '" + key + "'");
  return out;
}

void validate(const MapGeometry& m) {
  if (!(m.bounds.width() > 0.0 && m.bounds.height() > 0.0))
    throw MapError("bounds must have positive extent");

  auto check_point = [&](Vec2 p, const std::string& what) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw MapError(what + " is not finite");
    if (!m.bounds.contains(p)) throw MapError(what + " lies outside bounds");
    for (std::size_t i = 0; i < m.solid.size(); ++i) {
      if (point_segment_distance(p, m.solid[i]) < kPlayerRadius) {
        const std::string wall = i < m.walls.size() ? "wall " + std::to_string(i)
                                                    : "boundary edge";
        throw MapError(what + " lies inside " + wall);
      }
    }
  };
  check_point(m.attacker_spawn.xy(), "attacker_spawn");
  check_point(m.defender_spawn.xy(), "defender_spawn");
  if (!(m.bombsite.width() > 0.0 && m.bombsite.height() > 0.0))
    throw MapError("bombsite must have positive extent");
  if (!m.bounds.contains({m.bombsite.min_x, m.bombsite.min_y}) ||
      !m.bounds.contains({m.bombsite.max_x, m.bombsite.max_y}))
    throw MapError("bombsite lies outside bounds");
  check_point(m.bombsite.center(), "bombsite center");
  for (std::size_t i = 0; i < m.waypoints.size(); ++i)
    check_point(m.waypoints[i], "waypoint " + std::to_string(i));
  for (const auto& [a, b] : m.links) {
    if (a < 0 || b < 0 || a >= static_cast<int>(m.waypoints.size()) ||
        b >= static_cast<int>(m.waypoints.size()))
      throw MapError("link " + std::to_string(a) + " " + std::to_string(b) +
                     " references a missing waypoint");
    if (!m.clear_path(m.waypoints[a], m.waypoints[b]))
      throw MapError("link " + std::to_string(a) + " " + std::to_string(b) +
                     " passes through a wall");
  }

  // Connectivity between the two spawns and the bombsite, over waypoints
  // plus direct clear lines.
  const std::size_t n = m.waypoints.size();
  std::vector<Vec2> nodes(m.waypoints);
  nodes.push_back(m.attacker_spawn.xy());
  nodes.push_back(m.defender_spawn.xy());
  nodes.push_back(m.bombsite.center());
  std::vector<std::vector<int>> adj(nodes.size());
  for (const auto& [a, b] : m.links) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (std::size_t s = n; s < nodes.size(); ++s) {
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (j == s) continue;
      if (m.clear_path(nodes[s], nodes[j])) {
        adj[s].push_back(static_cast<int>(j));
        adj[j].push_back(static_cast<int>(s));
      }
    }
  }
  std::vector<bool> seen(nodes.size(), false);
  std::queue<int> q;
  q.push(static_cast<int>(n));
  seen[n] = true;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        q.push(v);
      }
    }
  }
  if (!seen[n + 1]) throw MapError("navigation graph does not connect attacker_spawn to defender_spawn");
  if (!seen[n + 2]) throw MapError("navigation graph does not connect attacker_spawn to bombsite");
}

}  // namespace

void MapGeometry::finalize() {
  solid = walls;
  const Rect& b = bounds;
  solid.push_back({{b.min_x, b.min_y}, {b.max_x, b.min_y}});
  solid.push_back({{b.max_x, b.min_y}, {b.max_x, b.max_y}});
  solid.push_back({{b.max_x, b.max_y}, {b.min_x, b.max_y}});
  solid.push_back({{b.min_x, b.max_y}, {b.min_x, b.min_y}});

  const std::size_t n = waypoints.size();
  path_length.assign(n, std::vector<double>(n, kInf));
  for (std::size_t i = 0; i < n; ++i) path_length[i][i] = 0.0;
  for (const auto& [a, c] : links) {
    if (a < 0 || c < 0 || a >= static_cast<int>(n) || c >= static_cast<int>(n)) continue;
    const double d = (waypoints[a] - waypoints[c]).norm();
    path_length[a][c] = std::min(path_length[a][c], d);
    path_length[c][a] = std::min(path_length[c][a], d);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        path_length[i][j] = std::min(path_length[i][j], path_length[i][k] + path_length[k][j]);
}

bool MapGeometry::clear_path(Vec2 a, Vec2 b, double clearance) const {
  const Segment2 s{a, b};
  for (const auto& w : solid) {
    if (segment_segment_distance(s, w) < clearance) return false;
  }
  return true;
}

double MapGeometry::route_length(Vec2 from, Vec2 goal) const {
  if (clear_path(from, goal)) return (goal - from).norm();
  const std::size_t n = waypoints.size();
  std::vector<double> to_goal(n, kInf);
  for (std::size_t g = 0; g < n; ++g)
    if (clear_path(waypoints[g], goal)) to_goal[g] = (goal - waypoints[g]).norm();
  double best = kInf;
  for (std::size_t w = 0; w < n; ++w) {
    if (!clear_path(from, waypoints[w])) continue;
    const double head = (waypoints[w] - from).norm();
    for (std::size_t g = 0; g < n; ++g)
      best = std::min(best, head + path_length[w][g] + to_goal[g]);
  }
  return best;
}

Vec2 MapGeometry::steer_target(Vec2 from, Vec2 goal) const {
  if (clear_path(from, goal)) return goal;
  const std::size_t n = waypoints.size();
  std::vector<double> to_goal(n, kInf);
  for (std::size_t g = 0; g < n; ++g)
    if (clear_path(waypoints[g], goal)) to_goal[g] = (goal - waypoints[g]).norm();
  std::vector<double> remaining(n, kInf);
  for (std::size_t w = 0; w < n; ++w)
    for (std::size_t g = 0; g < n; ++g)
      remaining[w] = std::min(remaining[w], path_length[w][g] + to_goal[g]);

  // Among directly reachable waypoints pick the one on the shortest route;
  // ties go to the farther waypoint so that progress never stalls on the
  // waypoint currently being stood on.
  double best_cost = kInf;
  double best_head = -1.0;
  Vec2 best = goal;
  for (std::size_t w = 0; w < n; ++w) {
    if (!std::isfinite(remaining[w])) continue;
    const double head = (waypoints[w] - from).norm();
    const double cost = head + remaining[w];
    if (cost < best_cost - 1e-6 || (cost <= best_cost + 1e-6 && head > best_head)) {
      if (!clear_path(from, waypoints[w])) continue;
      best_cost = std::min(best_cost, cost);
      best_head = head;
      best = waypoints[w];
    }
  }
  if (best_head < 0.0) {
    // Off the graph (e.g. pushed into a corner): fall back to the nearest
    // waypoint with a sight line that ignores clearance.
    double nearest = kInf;
    for (std::size_t w = 0; w < n; ++w) {
      const double d = (waypoints[w] - from).norm();
      if (d < nearest && clear_path(from, waypoints[w], 0.0)) {
        nearest = d;
        best = waypoints[w];
      }
    }
  }
  return best;
}

MapGeometry load_map(std::string_view text) {
  MapGeometry m;
  bool has_bounds = false, has_a = false, has_d = false, has_site = false;
  std::istringstream doc{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(doc, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream in(raw);
    std::string key;
    if (!(in >> key)) continue;
    if (key == "name") {
      if (!(in >> m.name)) fail(line_no, "'name' expects a value");
    } else if (key == "bounds") {
      auto v = read_numbers(in, 4, line_no, key);
      m.bounds = {v[0], v[1], v[2], v[3]};
      has_bounds = true;
    } else if (key == "attacker_spawn") {
      auto v = read_numbers(in, 2, line_no, key);
      m.attacker_spawn = {v[0], v[1], 0.0};
      has_a = true;
    } else if (key == "defender_spawn") {
      auto v = read_numbers(in, 2, line_no, key);
      m.defender_spawn = {v[0], v[1], 0.0};
      has_d = true;
    } else if (key == "bombsite") {
      auto v = read_numbers(in, 4, line_no, key);
      m.bombsite = {v[0], v[1], v[2], v[3]};
      has_site = true;
    } else if (key == "wall") {
      auto v = read_numbers(in, 4, line_no, key);
      m.walls.push_back({{v[0], v[1]}, {v[2], v[3]}});
    } else if (key == "waypoint") {
      auto v = read_numbers(in, 2, line_no, key);
      m.waypoints.push_back({v[0], v[1]});
    } else if (key == "link") {
      auto v = read_numbers(in, 2, line_no, key);
      if (v[0] != std::floor(v[0]) || v[1] != std::floor(v[1]))
        fail(line_no, "'link' expects integer waypoint indices");
      m.links.emplace_back(static_cast<int>(v[0]), static_cast<int>(v[1]));
    } else {
      fail(line_no, "unknown key '" + key + "'");
    }
  }
  if (!has_bounds) throw MapError("missing required key 'bounds'");
  if (!has_a) throw MapError("missing required key 'attacker_spawn'");
  if (!has_d) throw MapError("missing required key 'defender_spawn'");
  if (!has_site) throw MapError("missing required key 'bombsite'");
  if (m.name.empty()) m.name = "unnamed";
  m.finalize();
  validate(m);
  return m;
}

MapGeometry load_map_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MapError("cannot open map file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_map(buf.str());
}

std::string builtin_map_text(std::string_view name) {
  if (name == "ascent_mini") return kAscentMini;
  if (name == "open_room") return kOpenRoom;
  throw MapError("unknown built-in map '" + std::string(name) + "'");
}

MapGeometry resolve_map(std::string_view name_or_path) {
  if (name_or_path == "ascent_mini" || name_or_path == "open_room")
    return load_map(builtin_map_text(name_or_path));
  return load_map_file(std::filesystem::path(name_or_path));
}

std::string map_to_text(const MapGeometry& m) {
  std::ostringstream out;
  out.precision(17);
  out << "name " << m.name << "\n";
  out << "bounds " << m.bounds.min_x << ' ' << m.bounds.min_y << ' ' << m.bounds.max_x << ' '
      << m.bounds.max_y << "\n";
  out << "attacker_spawn " << m.attacker_spawn.x << ' ' << m.attacker_spawn.y << "\n";
  out << "defender_spawn " << m.defender_spawn.x << ' ' << m.defender_spawn.y << "\n";
  out << "bombsite " << m.bombsite.min_x << ' ' << m.bombsite.min_y << ' ' << m.bombsite.max_x
      << ' ' << m.bombsite.max_y << "\n";
  for (const auto& w : m.walls)
    out << "wall " << w.a.x << ' ' << w.a.y << ' ' << w.b.x << ' ' << w.b.y << "\n";
  for (const auto& p : m.waypoints) out << "waypoint " << p.x << ' ' << p.y << "\n";
  for (const auto& [a, b] : m.links) out << "link " << a << ' ' << b << "\n";
  return out.str();
}

}  // namespace tacbot
