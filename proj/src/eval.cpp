#include "tacbot/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

#include "tacbot/sensors.hpp"

namespace tacbot {

// --- Features ----------------------------------------------------------------------

namespace {

void check_player(int id, const RoundLog& r, const char* what) {
  if (id < -1 || id >= kNumPlayers)
    throw LogError("round " + std::to_string(r.round_id) + ": " + what + " id " + std::to_string(id) +
                   " out of range");
}

double planar_distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

std::vector<BehaviorFeatures> extract_features(const std::vector<RoundLog>& rounds) {
  std::vector<BehaviorFeatures> out;
  out.reserve(rounds.size() * kNumPlayers);
  for (const auto& r : rounds) {
    if (r.outcome == Outcome::Ongoing)
      throw LogError("round " + std::to_string(r.round_id) + " has no outcome");
    std::array<BehaviorFeatures, kNumPlayers> f;
    std::array<double, kNumPlayers> distance{};
    std::array<bool, kNumPlayers> key4_prev{};
    for (int p = 0; p < kNumPlayers; ++p) {
      f[p].round_id = r.round_id;
      f[p].player_id = p;
      f[p].team = r.teams[p];
      f[p].role = r.roles[p];
      f[p].duration = r.duration();
    }
    const std::array<PlayerSnapshot, kNumPlayers>* prev = &r.start;
    for (const auto& t : r.ticks) {
      for (int p = 0; p < kNumPlayers; ++p) {
        if ((*prev)[p].alive) {
          ++f[p].alive_ticks;
          distance[p] += planar_distance((*prev)[p].position, t.players[p].position);
        }
        const bool key4 = t.actions[p].keys.pressed(Key::Key4);
        if (key4 && !key4_prev[p]) {
          if (r.teams[p] == Team::Attacker)
            ++f[p].plant_attempts;
          else
            ++f[p].defuse_attempts;
        }
        key4_prev[p] = key4;
      }
      for (const auto& e : t.events) {
        check_player(e.emitter, r, "event emitter");
        if (e.kind == EventKind::Shot && e.emitter >= 0) ++f[e.emitter].shots;
      }
      for (const auto& k : t.kills) {
        check_player(k.killer, r, "killer");
        check_player(k.victim, r, "victim");
        if (k.killer >= 0) ++f[k.killer].kills;
        if (k.victim >= 0) ++f[k.victim].deaths;
        for (int a : k.assisters) {
          check_player(a, r, "assister");
          if (a >= 0) ++f[a].assists;
        }
      }
      for (const auto& a : t.abilities) {
        check_player(a.player, r, "ability user");
        if (a.player >= 0) ++f[a.player].ability_uses;
      }
      for (const auto& o : t.objectives) {
        check_player(o.player, r, "objective player");
        if (o.player < 0) continue;
        if (o.kind == ObjectiveKind::Planted) ++f[o.player].plant_successes;
        if (o.kind == ObjectiveKind::Defused) ++f[o.player].defuse_successes;
      }
      prev = &t.players;
    }
    for (int p = 0; p < kNumPlayers; ++p) {
      f[p].mean_speed = f[p].alive_ticks > 0 ? distance[p] / (f[p].alive_ticks * kDt) : 0.0;
      f[p].shots_per_kill = static_cast<double>(f[p].shots) / std::max(f[p].kills, 1);
      out.push_back(f[p]);
    }
  }
  return out;
}

const char* to_string(Feature f) {
  switch (f) {
    case Feature::Duration: return "duration";
    case Feature::Speed: return "speed";
    case Feature::Shots: return "shots";
    case Feature::ShotsPerKill: return "shots_per_kill";
    case Feature::Kills: return "kills";
    case Feature::Abilities: return "abilities";
  }
  return "?";
}

const std::vector<Feature>& all_features() {
  static const std::vector<Feature> v = {Feature::Duration, Feature::Speed,        Feature::Shots,
                                         Feature::ShotsPerKill, Feature::Kills, Feature::Abilities};
  return v;
}

double feature_value(const BehaviorFeatures& b, Feature f) {
  switch (f) {
    case Feature::Duration: return b.duration;
    case Feature::Speed: return b.mean_speed;
    case Feature::Shots: return b.shots;
    case Feature::ShotsPerKill: return b.shots_per_kill;
    case Feature::Kills: return b.kills;
    case Feature::Abilities: return b.ability_uses;
  }
  return 0.0;
}

// --- Histograms ---------------------------------------------------------------------

BucketSpec bucket_spec(Feature f) {
  switch (f) {
    case Feature::Duration: return {static_cast<double>(kTickRate), 0.0};
    case Feature::Speed: return {0.25, 0.0};
    default: return {1.0, -0.5};
  }
}

namespace {

long long bucket_of(double v, const BucketSpec& s) {
  return static_cast<long long>(std::floor((v - s.origin) / s.width));
}

}  // namespace

Histogram histogram(const std::vector<double>& values, const BucketSpec& spec,
                    const std::vector<double>& support) {
  if (values.empty()) throw std::invalid_argument("histogram of an empty sample");
  if (!(spec.width > 0.0)) throw std::invalid_argument("bucket width must be positive");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : support) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite histogram value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (support.empty()) throw std::invalid_argument("empty histogram support");
  const long long k_lo = bucket_of(lo, spec);
  const long long k_hi = bucket_of(hi, spec);
  const auto n = static_cast<std::size_t>(k_hi - k_lo + 1);
  if (n > 10'000'000) throw std::invalid_argument("histogram support too wide");

  Histogram h;
  h.edges.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) h.edges[k] = spec.origin + static_cast<double>(k_lo + static_cast<long long>(k)) * spec.width;
  h.probabilities.assign(n, 0.0);
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite histogram value");
    const long long k = bucket_of(v, spec);
    if (k < k_lo || k > k_hi) throw std::invalid_argument("histogram value outside the support");
    h.probabilities[static_cast<std::size_t>(k - k_lo)] += 1.0;
  }
  for (double& p : h.probabilities) p /= static_cast<double>(values.size());
  h.sample_count = values.size();
  return h;
}

Histogram histogram(const std::vector<double>& values, const BucketSpec& spec) {
  return histogram(values, spec, values);
}

double kl(const Histogram& p, const Histogram& q) {
  if (p.edges != q.edges || p.probabilities.size() != q.probabilities.size())
    throw std::invalid_argument("histograms have different buckets");
  double d = 0.0;
  for (std::size_t k = 0; k < p.probabilities.size(); ++k) {
    const double pk = p.probabilities[k];
    const double qk = q.probabilities[k];
    if (pk <= 0.0) continue;
    if (qk <= 0.0) return std::numeric_limits<double>::infinity();
    d += pk * std::log(pk / qk);
  }
  return std::max(d, 0.0);
}

double js(const Histogram& p, const Histogram& q) {
  if (p.edges != q.edges || p.probabilities.size() != q.probabilities.size())
    throw std::invalid_argument("histograms have different buckets");
  Histogram m = p;
  for (std::size_t k = 0; k < m.probabilities.size(); ++k)
    m.probabilities[k] = 0.5 * (p.probabilities[k] + q.probabilities[k]);
  return std::clamp(0.5 * (kl(p, m) + kl(q, m)), 0.0, std::log(2.0));
}

namespace {

std::vector<double> values_of(const std::vector<BehaviorFeatures>& v, Feature f) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& b : v) out.push_back(feature_value(b, f));
  return out;
}

}  // namespace

double feature_js(const std::vector<BehaviorFeatures>& a, const std::vector<BehaviorFeatures>& b,
                  Feature f) {
  const auto va = values_of(a, f);
  const auto vb = values_of(b, f);
  std::vector<double> support = va;
  support.insert(support.end(), vb.begin(), vb.end());
  const auto spec = bucket_spec(f);
  return js(histogram(va, spec, support), histogram(vb, spec, support));
}

std::vector<DivergenceRow> divergence_table(const std::vector<BehaviorFeatures>& a,
                                            const std::vector<BehaviorFeatures>& b) {
  std::vector<DivergenceRow> rows;
  for (Team team : {Team::Attacker, Team::Defender}) {
    std::vector<BehaviorFeatures> sa, sb;
    for (const auto& x : a)
      if (x.team == team) sa.push_back(x);
    for (const auto& x : b)
      if (x.team == team) sb.push_back(x);
    if (sa.empty() || sb.empty()) continue;
    for (Feature f : all_features()) {
      DivergenceRow row;
      row.side = team == Team::Attacker ? "attack" : "defence";
      row.feature = f;
      row.js = feature_js(sa, sb, f);
      row.samples_a = sa.size();
      row.samples_b = sb.size();
      rows.push_back(row);
    }
  }
  return rows;
}

// --- Heatmaps ---------------------------------------------------------------------

double Heatmap::total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }

Heatmap heatmap_grid(const Rect& bounds, double cell_size, int cells) {
  const double w = bounds.max_x - bounds.min_x;
  const double h = bounds.max_y - bounds.min_y;
  if (!(w > 0.0) || !(h > 0.0)) throw std::invalid_argument("heatmap bounds are empty");
  Heatmap g;
  g.origin = {bounds.min_x, bounds.min_y};
  if (cell_size > 0.0) {
    g.cell_w = g.cell_h = cell_size;
    g.width = std::max(1, static_cast<int>(std::ceil(w / cell_size - 1e-9)));
    g.height = std::max(1, static_cast<int>(std::ceil(h / cell_size - 1e-9)));
  } else {
    if (cells <= 0) throw std::invalid_argument("heatmap needs at least one cell");
    g.width = g.height = cells;
    g.cell_w = w / cells;
    g.cell_h = h / cells;
  }
  if (static_cast<long long>(g.width) * g.height > 4'000'000)
    throw std::invalid_argument("heatmap grid too large");
  g.mass.assign(static_cast<std::size_t>(g.width) * g.height, 0.0);
  return g;
}

Heatmap build_heatmap(const std::vector<RoundLog>& rounds, Side side, const Rect& bounds,
                      double cell_size, int* clamped) {
  Heatmap g = heatmap_grid(bounds, cell_size);
  const Team team = side == Side::Attack ? Team::Attacker : Team::Defender;
  int outside = 0;
  for (const auto& r : rounds)
    for (const auto& t : r.ticks)
      for (int p = 0; p < kNumPlayers; ++p) {
        const auto& s = t.players[p];
        if (r.teams[p] != team || !s.alive) continue;
        const Vec2 pos{s.position.x, s.position.y};
        if (pos.x < bounds.min_x || pos.x > bounds.max_x || pos.y < bounds.min_y || pos.y > bounds.max_y)
          ++outside;
        const int cx = std::clamp(static_cast<int>(std::floor((pos.x - g.origin.x) / g.cell_w)), 0, g.width - 1);
        const int cy = std::clamp(static_cast<int>(std::floor((pos.y - g.origin.y) / g.cell_h)), 0, g.height - 1);
        g.at(cx, cy) += 1.0;
      }
  const double total = g.total();
  if (total > 0.0)
    for (double& m : g.mass) m /= total;
  if (clamped) *clamped = outside;
  return g;
}

double emd_1d(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("emd_1d: bucket counts differ");
  const double tp = std::accumulate(p.begin(), p.end(), 0.0);
  const double tq = std::accumulate(q.begin(), q.end(), 0.0);
  if (std::abs(tp - tq) > 1e-9 * std::max({1.0, tp, tq}))
    throw std::invalid_argument("emd_1d: total masses differ");
  double cp = 0.0, cq = 0.0, d = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    cp += p[k];
    cq += q[k];
    d += std::abs(cp - cq);
  }
  return d;
}

double emd_1d_no_location(const Heatmap& p, const Heatmap& q, int n_buckets) {
  if (p.mass.size() != q.mass.size()) throw std::invalid_argument("heatmaps differ in size");
  if (n_buckets <= 0) throw std::invalid_argument("emd_1d needs at least one bucket");
  if (p.mass.empty()) return 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* h : {&p, &q})
    for (double v : h->mass) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double width = (hi - lo) / n_buckets;
  auto bucketize = [&](const Heatmap& h) {
    std::vector<double> b(static_cast<std::size_t>(n_buckets), 0.0);
    for (double v : h.mass) {
      int k = width > 0.0 ? static_cast<int>(std::floor((v - lo) / width)) : 0;
      b[static_cast<std::size_t>(std::clamp(k, 0, n_buckets - 1))] += 1.0;
    }
    for (double& x : b) x /= static_cast<double>(h.mass.size());
    return b;
  };
  return emd_1d(bucketize(p), bucketize(q));
}

namespace {

struct BasicCell {
  int i = 0;
  int j = 0;
  double flow = 0.0;
};

}  // namespace

double transport_cost(const std::vector<double>& supply, const std::vector<double>& demand,
                      const std::vector<std::vector<double>>& cost) {
  const int m = static_cast<int>(supply.size());
  const int n = static_cast<int>(demand.size());
  if (m == 0 || n == 0) throw std::invalid_argument("transport: empty supply or demand");
  if (static_cast<int>(cost.size()) != m) throw std::invalid_argument("transport: cost rows");
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != n) throw std::invalid_argument("transport: cost columns");
  double ts = 0.0, td = 0.0, cmax = 0.0;
  for (double s : supply) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("transport: bad supply");
    ts += s;
  }
  for (double d : demand) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("transport: bad demand");
    td += d;
  }
  for (const auto& row : cost)
    for (double c : row) {
      if (!std::isfinite(c)) throw std::invalid_argument("transport: bad cost");
      cmax = std::max(cmax, std::abs(c));
    }
  if (!(ts > 0.0) || std::abs(ts - td) > 1e-9 * std::max(ts, td))
    throw std::invalid_argument("transport: supply and demand totals differ");

  // Least-cost initial basis: m + n - 1 cells forming a spanning tree.
  std::vector<double> s = supply, d = demand;
  for (double& x : d) x *= ts / td;
  std::vector<int> order(static_cast<std::size_t>(m) * n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cost[a / n][a % n] < cost[b / n][b % n]; });
  std::vector<char> row_done(m, 0), col_done(n, 0);
  int rows_left = m, cols_left = n;
  std::vector<BasicCell> basis;
  basis.reserve(static_cast<std::size_t>(m + n - 1));
  std::vector<char> is_basic(static_cast<std::size_t>(m) * n, 0);
  for (int idx : order) {
    if (rows_left == 0 && cols_left == 0) break;
    const int i = idx / n, j = idx % n;
    if (row_done[i] || col_done[j]) continue;
    const double x = std::min(s[i], d[j]);
    basis.push_back({i, j, x});
    is_basic[idx] = 1;
    s[i] -= x;
    d[j] -= x;
    const bool row_first = s[i] <= d[j];
    if (rows_left == 1 && cols_left == 1) {
      row_done[i] = col_done[j] = 1;
      rows_left = cols_left = 0;
    } else if ((row_first && rows_left > 1) || cols_left == 1) {
      row_done[i] = 1;
      --rows_left;
      d[j] += s[i];  // rounding residue follows the column
      s[i] = 0.0;
    } else {
      col_done[j] = 1;
      --cols_left;
      s[i] += d[j];
      d[j] = 0.0;
    }
  }

  // Node ids: rows 0..m-1, columns m..m+n-1.
  const int nodes = m + n;
  std::vector<std::vector<int>> adj(nodes);
  auto link = [&](int b) {
    adj[basis[b].i].push_back(b);
    adj[m + basis[b].j].push_back(b);
  };
  auto unlink = [&](int b) {
    for (int node : {basis[b].i, m + basis[b].j}) {
      auto& v = adj[node];
      v.erase(std::find(v.begin(), v.end(), b));
    }
  };
  for (int b = 0; b < static_cast<int>(basis.size()); ++b) link(b);

  std::vector<double> pot(nodes);
  std::vector<char> seen(nodes);
  std::vector<int> parent_edge(nodes);
  std::vector<int> stack;
  const double tol = 1e-12 * std::max(1.0, cmax);
  const long long max_iter = 50LL * nodes * nodes + 1000;

  for (long long iter = 0;; ++iter) {
    if (iter > max_iter) throw std::runtime_error("transport: simplex did not converge");
    // Potentials u_i + v_j = c_ij on the basis tree.
    std::fill(seen.begin(), seen.end(), 0);
    pot[0] = 0.0;
    seen[0] = 1;
    stack.assign(1, 0);
    while (!stack.empty()) {
      const int a = stack.back();
      stack.pop_back();
      for (int b : adj[a]) {
        const auto& c = basis[b];
        const int other = a < m ? m + c.j : c.i;
        if (seen[other]) continue;
        seen[other] = 1;
        pot[other] = cost[c.i][c.j] - pot[a];
        stack.push_back(other);
      }
    }
    int ei = -1, ej = -1;
    double best = -tol;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        if (is_basic[static_cast<std::size_t>(i) * n + j]) continue;
        const double r = cost[i][j] - pot[i] - pot[m + j];
        if (r < best) {
          best = r;
          ei = i;
          ej = j;
        }
      }
    if (ei < 0) break;

    // Tree path from row ei to column ej closes the cycle with the entering cell.
    std::fill(seen.begin(), seen.end(), 0);
    std::fill(parent_edge.begin(), parent_edge.end(), -1);
    seen[ei] = 1;
    stack.assign(1, ei);
    while (!stack.empty() && !seen[m + ej]) {
      const int a = stack.back();
      stack.pop_back();
      for (int b : adj[a]) {
        const auto& c = basis[b];
        const int other = a < m ? m + c.j : c.i;
        if (seen[other]) continue;
        seen[other] = 1;
        parent_edge[other] = b;
        stack.push_back(other);
      }
    }
    std::vector<int> path;  // from column ej back to row ei; odd positions lose flow
    for (int node = m + ej; node != ei;) {
      const int b = parent_edge[node];
      path.push_back(b);
      node = node < m ? m + basis[b].j : basis[b].i;
    }
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 0; k < path.size(); k += 2)
      if (basis[path[k]].flow < theta) {
        theta = basis[path[k]].flow;
        leave = path[k];
      }
    for (std::size_t k = 0; k < path.size(); ++k) {
      auto& f = basis[path[k]].flow;
      f = k % 2 == 0 ? std::max(0.0, f - theta) : f + theta;
    }
    unlink(leave);
    is_basic[static_cast<std::size_t>(basis[leave].i) * n + basis[leave].j] = 0;
    basis[leave] = {ei, ej, theta};
    is_basic[static_cast<std::size_t>(ei) * n + ej] = 1;
    link(leave);
  }

  double total = 0.0;
  for (const auto& c : basis) total += c.flow * cost[c.i][c.j];
  return total;
}

double emd_2d(const Heatmap& p, const Heatmap& q) {
  if (p.width != q.width || p.height != q.height) throw std::invalid_argument("heatmaps differ in size");
  const double tp = p.total(), tq = q.total();
  if (!(tp > 0.0) || !(tq > 0.0)) throw std::invalid_argument("emd_2d of an empty heatmap");
  // The cost is symmetric; a fixed argument order makes the result bitwise symmetric too.
  if (std::lexicographical_compare(q.mass.begin(), q.mass.end(), p.mass.begin(), p.mass.end())) return emd_2d(q, p);
  std::vector<int> src, dst;
  std::vector<double> supply, demand;
  for (int k = 0; k < static_cast<int>(p.mass.size()); ++k) {
    if (p.mass[k] > 0.0) {
      src.push_back(k);
      supply.push_back(p.mass[k] / tp);
    }
    if (q.mass[k] > 0.0) {
      dst.push_back(k);
      demand.push_back(q.mass[k] / tq);
    }
  }
  std::vector<std::vector<double>> cost(src.size(), std::vector<double>(dst.size()));
  for (std::size_t a = 0; a < src.size(); ++a)
    for (std::size_t b = 0; b < dst.size(); ++b) {
      const int dx = src[a] % p.width - dst[b] % p.width;
      const int dy = src[a] / p.width - dst[b] / p.width;
      cost[a][b] = std::sqrt(static_cast<double>(dx * dx + dy * dy));
    }
  return transport_cost(supply, demand, cost);
}

double asd(const Heatmap& p, const Heatmap& q) {
  if (p.mass.size() != q.mass.size()) throw std::invalid_argument("heatmaps differ in size");
  double d = 0.0;
  for (std::size_t k = 0; k < p.mass.size(); ++k) d += std::abs(p.mass[k] - q.mass[k]);
  return d;
}

// --- Rendering --------------------------------------------------------------------

Rgb ramp_color(double t) {
  static constexpr double stops[4][3] = {{0, 0, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
  if (!std::isfinite(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double s = t * 3.0;
  const int k = std::min(2, static_cast<int>(std::floor(s)));
  const double f = s - k;
  auto ch = [&](int c) {
    return static_cast<std::uint8_t>(std::lround(stops[k][c] + (stops[k + 1][c] - stops[k][c]) * f));
  };
  return {ch(0), ch(1), ch(2)};
}

void render_heatmap(const Heatmap& h, const std::filesystem::path& path, int scale) {
  if (scale <= 0) throw std::invalid_argument("render scale must be positive");
  if (h.mass.empty()) throw std::invalid_argument("render of an empty heatmap");
  const auto [mn, mx] = std::minmax_element(h.mass.begin(), h.mass.end());
  const bool flat = *mn == *mx;
  const int W = h.width * scale, H = h.height * scale;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(W) * H * 3);
  for (int py = 0; py < H; ++py) {
    const int cy = h.height - 1 - py / scale;
    for (int px = 0; px < W; ++px) {
      const double v = h.at(px / scale, cy);
      const Rgb c = ramp_color(flat ? 0.5 : v / *mx);
      const std::size_t o = (static_cast<std::size_t>(py) * W + px) * 3;
      pixels[o] = c.r;
      pixels[o + 1] = c.g;
      pixels[o + 2] = c.b;
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << W << ' ' << H << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// --- Inference latency ------------------------------------------------------------------

std::string cpu_descriptor() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon == std::string::npos) break;
      auto v = line.substr(colon + 1);
      v.erase(0, v.find_first_not_of(" \t"));
      return v;
    }
  }
  return "unknown";
}

BenchResult bench_inference(const NetworkConfig& config, int n_warmup, int n_iters, std::uint64_t seed) {
  if (n_iters < 100) throw std::invalid_argument("benchmark needs at least 100 timed iterations");
  if (n_warmup < 0) throw std::invalid_argument("negative warmup count");
  Eigen::setNbThreads(1);
  const auto params = to_float(init_params(config, seed));
  std::mt19937_64 rng(seed ^ 0x62656e6368ULL);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  constexpr int kInputs = 8;
  std::vector<Mat<float>> inputs(kInputs, Mat<float>(kObservationSize, 1));
  for (auto& m : inputs)
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);

  auto hidden = zero_hidden<float>(config, 1);
  Mat<float> aim, keys;
  ForwardScratch<float> scratch;
  for (int k = 0; k < n_warmup; ++k)
    forward_step<float>(params, inputs[k % kInputs], hidden, Mode::Infer, nullptr, aim, keys, &scratch);

  std::vector<double> ms(static_cast<std::size_t>(n_iters));
  for (int k = 0; k < n_iters; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    forward_step<float>(params, inputs[k % kInputs], hidden, Mode::Infer, nullptr, aim, keys, &scratch);
    const auto t1 = std::chrono::steady_clock::now();
    ms[k] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  BenchResult r;
  r.model = config.name;
  r.parameters = count_params(config);
  r.iterations = n_iters;
  r.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / n_iters;
  double var = 0.0;
  for (double x : ms) var += (x - r.mean_ms) * (x - r.mean_ms);
  r.std_ms = std::sqrt(var / (n_iters - 1));
  r.cpu = cpu_descriptor();
  return r;
}

}  // namespace tacbot
