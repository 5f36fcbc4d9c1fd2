#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lp_oracle.hpp"
#include "tacbot/eval.hpp"
#include "tacbot/policy.hpp"
#include "test_support.hpp"

using namespace tacbot;
using namespace tacbot::testing;
namespace fs = std::filesystem;

namespace {

/// Round in which every player stands still at `pos[p]` for `ticks` steps.
RoundLog still_round(int ticks, const std::array<Vec3, kNumPlayers>& pos) {
  RoundLog r;
  r.teams = {Team::Attacker, Team::Attacker, Team::Defender, Team::Defender};
  r.roles = {Role::Controller, Role::Initiator, Role::Controller, Role::Initiator};
  for (int p = 0; p < kNumPlayers; ++p) {
    r.start[p].position = pos[p];
    r.start[p].alive = true;
  }
  for (int t = 0; t < ticks; ++t) {
    TickLog tl;
    tl.tick = t;
    tl.players = r.start;
    r.ticks.push_back(tl);
  }
  r.outcome = Outcome::DefendersWin;
  return r;
}

Heatmap grid_with(int w, int h, const std::vector<std::pair<int, double>>& cells) {
  Heatmap g;
  g.width = w;
  g.height = h;
  g.mass.assign(static_cast<std::size_t>(w) * h, 0.0);
  for (auto [k, m] : cells) g.mass[k] = m;
  return g;
}

Heatmap random_heatmap(std::mt19937_64& rng, int w, int h, double zero_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Heatmap g = grid_with(w, h, {});
  for (double& m : g.mass) m = u(rng) < zero_prob ? 0.0 : u(rng);
  if (g.total() == 0.0) g.mass[0] = 1.0;
  const double t = g.total();
  for (double& m : g.mass) m /= t;
  return g;
}

double lp_emd(const Heatmap& p, const Heatmap& q) {
  std::vector<double> supply = p.mass, demand = q.mass;
  const int n = static_cast<int>(p.mass.size());
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      cost[a][b] = std::hypot(a % p.width - b % p.width, a / p.width - b / p.width);
  return lp_transport(supply, demand, cost);
}

Histogram hist_of(std::vector<double> probs) {
  Histogram h;
  h.probabilities = std::move(probs);
  for (std::size_t k = 0; k <= h.probabilities.size(); ++k) h.edges.push_back(static_cast<double>(k));
  h.sample_count = 1;
  return h;
}

std::vector<double> random_probs(std::mt19937_64& rng, int n, double zero_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  for (double& x : p) x = u(rng) < zero_prob ? 0.0 : u(rng);
  if (std::accumulate(p.begin(), p.end(), 0.0) == 0.0) p[0] = 1.0;
  const double t = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= t;
  return p;
}

// Entropy form of the divergence, independent of the KL-based implementation.
double js_entropy_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  auto H = [](const std::vector<double>& v) {
    double h = 0.0;
    for (double x : v)
      if (x > 0.0) h -= x * std::log(x);
    return h;
  };
  std::vector<double> m(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) m[k] = 0.5 * (p[k] + q[k]);
  return H(m) - 0.5 * (H(p) + H(q));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("features of a hand-built round") {
  RoundLog r = still_round(32, {Vec3{0, 0, 0}, Vec3{5, 5, 0}, Vec3{10, 10, 0}, Vec3{20, 20, 0}});
  // Player 0 walks 0.25 m per tick along x: 4 m/s.
  for (int t = 0; t < 32; ++t) r.ticks[t].players[0].position = {0.25 * (t + 1), 0, 0};
  for (int t : {3, 4, 10}) r.ticks[t].actions[0].keys.set(Key::Key4);
  r.ticks[20].actions[2].keys.set(Key::Key4);
  for (int t : {1, 2, 3}) r.ticks[t].events.push_back({EventKind::Shot, {}, 0, t});
  r.ticks[5].events.push_back({EventKind::Footstep, {}, 0, 5});
  r.ticks[3].kills.push_back({0, 2, {1}});
  r.ticks[3].players[2].alive = false;
  for (int t = 4; t < 32; ++t) r.ticks[t].players[2].alive = false;
  r.ticks[7].abilities.push_back({1, true});
  r.ticks[9].objectives.push_back({ObjectiveKind::Planted, 0});

  const auto f = extract_features({r});
  REQUIRE(f.size() == 4);
  CHECK(f[0].duration == 32);
  CHECK(f[0].mean_speed == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(f[0].shots == 3);
  CHECK(f[0].kills == 1);
  CHECK(f[0].shots_per_kill == 3.0);
  CHECK(f[0].plant_attempts == 2);
  CHECK(f[0].plant_successes == 1);
  CHECK(f[1].assists == 1);
  CHECK(f[1].ability_uses == 1);
  CHECK(f[2].deaths == 1);
  CHECK(f[2].alive_ticks == 4);
  CHECK(f[2].defuse_attempts == 1);
  // Idle player: the whole round, no movement, no shots.
  CHECK(f[3].duration == 32);
  CHECK(f[3].alive_ticks == 32);
  CHECK(f[3].mean_speed == 0.0);
  CHECK(f[3].shots == 0);
  CHECK(f[3].shots_per_kill == 0.0);

  r.outcome = Outcome::Ongoing;
  CHECK_THROWS_AS(extract_features({r}), LogError);
  r.outcome = Outcome::AttackersWin;
  r.ticks[0].kills.push_back({7, 1, {}});
  CHECK_THROWS_AS(extract_features({r}), LogError);
}

TEST_CASE("features of simulated rounds agree with the logs") {
  auto map = shipped();
  const Dataset d = generate_dataset(2, default_roster(), map, 99);
  const auto f = extract_features(d.rounds);
  REQUIRE(f.size() == d.rounds.size() * 4);
  for (std::size_t r = 0; r < d.rounds.size(); ++r) {
    int kills = 0, shots = 0, records = 0, shot_events = 0;
    for (int p = 0; p < 4; ++p) {
      CHECK(f[r * 4 + p].duration == d.rounds[r].duration());
      CHECK(f[r * 4 + p].mean_speed <= kRunSpeed * 1.5);
      kills += f[r * 4 + p].kills;
      shots += f[r * 4 + p].shots;
    }
    for (const auto& t : d.rounds[r].ticks) {
      records += static_cast<int>(t.kills.size());
      for (const auto& e : t.events) shot_events += e.kind == EventKind::Shot;
    }
    CHECK(kills == records);
    CHECK(shots == shot_events);
  }
}

TEST_CASE("histogram buckets") {
  const Histogram h = histogram({1, 1, 2}, bucket_spec(Feature::Kills));
  REQUIRE(h.probabilities.size() == 2);
  CHECK(h.probabilities[0] == doctest::Approx(2.0 / 3.0));
  CHECK(h.probabilities[1] == doctest::Approx(1.0 / 3.0));
  CHECK(h.edges == std::vector<double>{0.5, 1.5, 2.5});
  CHECK(h.sample_count == 3);

  // Durations in ticks fall into one-second bins.
  const Histogram d = histogram({0, 15, 16, 47}, bucket_spec(Feature::Duration));
  CHECK(d.probabilities == std::vector<double>{0.5, 0.25, 0.25});
  const Histogram s = histogram({0.1, 0.3, 0.49}, bucket_spec(Feature::Speed));
  CHECK(s.probabilities.size() == 2);

  // A shared support aligns the edges of both samples.
  const std::vector<double> a = {0, 1}, b = {5};
  std::vector<double> both = {0, 1, 5};
  const auto ha = histogram(a, bucket_spec(Feature::Shots), both);
  const auto hb = histogram(b, bucket_spec(Feature::Shots), both);
  CHECK(ha.edges == hb.edges);
  CHECK(ha.probabilities.size() == 6);

  CHECK_THROWS_AS(histogram({}, bucket_spec(Feature::Shots)), std::invalid_argument);
  CHECK_THROWS_AS(histogram({9}, bucket_spec(Feature::Shots), {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(histogram({NAN}, bucket_spec(Feature::Shots)), std::invalid_argument);
}

TEST_CASE("kl divergence values") {
  const auto p = hist_of({0.5, 0.5});
  const auto q = hist_of({0.25, 0.75});
  CHECK(kl(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75)).epsilon(1e-14));
  CHECK(kl(p, p) == 0.0);
  CHECK(std::isinf(kl(hist_of({0.5, 0.5}), hist_of({1.0, 0.0}))));
  CHECK(kl(hist_of({1.0, 0.0}), hist_of({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(kl(hist_of({1.0}), hist_of({0.5, 0.5})), std::invalid_argument);
}

TEST_CASE("js divergence properties on random pairs") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 1000; ++k) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const auto pp = random_probs(rng, n, 0.3);
    const auto qq = random_probs(rng, n, 0.3);
    const auto p = hist_of(pp), q = hist_of(qq);
    CHECK(js(p, p) == 0.0);
    CHECK(std::abs(js(p, q) - js(q, p)) <= 1e-12);
    CHECK(js(p, q) >= 0.0);
    CHECK(js(p, q) <= std::log(2.0));
    CHECK(js(p, q) == doctest::Approx(js_entropy_oracle(pp, qq)).epsilon(1e-9));
  }
  CHECK(js(hist_of({0.5, 0.5, 0, 0}), hist_of({0, 0, 0.3, 0.7})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("feature divergence table") {
  auto map = shipped();
  const Dataset a = generate_dataset(2, default_roster(), map, 1);
  RandomDriver rnd;
  const Dataset b = run_matches(map, rnd, 1, 2, 2, false);
  const auto fa = extract_features(a.rounds);
  const auto fb = extract_features(b.rounds);
  CHECK(feature_js(fa, fa, Feature::Kills) == 0.0);
  const auto rows = divergence_table(fa, fb);
  CHECK(rows.size() == 2 * all_features().size());
  for (const auto& r : rows) {
    CHECK(r.js >= 0.0);
    CHECK(r.js <= std::log(2.0));
  }
  // Random play always runs the clock out; experts rarely do.
  CHECK(feature_js(fa, fb, Feature::Duration) > 0.3);
}

TEST_CASE("heatmap construction") {
  const Rect bounds{0, 0, 32, 32};
  const RoundLog r = still_round(10, {Vec3{3.5, 7.2, 0}, Vec3{3.6, 7.9, 0}, Vec3{30, 30, 0}, Vec3{31, 1, 0}});
  const Heatmap att = build_heatmap({r}, Side::Attack, bounds);
  CHECK(att.width == 32);
  CHECK(att.height == 32);
  CHECK(att.total() == doctest::Approx(1.0));
  CHECK(att.at(3, 7) == doctest::Approx(1.0));
  const Heatmap def = build_heatmap({r}, Side::Defence, bounds);
  CHECK(def.at(30, 30) == doctest::Approx(0.5));
  CHECK(def.at(31, 1) == doctest::Approx(0.5));

  // Translating positions and bounds together leaves the grid unchanged.
  RoundLog moved = r;
  const Vec3 shift{100, -50, 0};
  for (auto& t : moved.ticks)
    for (auto& p : t.players) p.position = p.position + shift;
  const Heatmap att2 = build_heatmap({moved}, Side::Attack, Rect{100, -50, 132, -18});
  CHECK(att2.mass == att.mass);

  // Out-of-bounds positions are clamped into the border cells and counted.
  RoundLog outside = still_round(4, {Vec3{-5, 40, 0}, Vec3{1, 1, 0}, Vec3{1, 1, 0}, Vec3{1, 1, 0}});
  int clamped = 0;
  const Heatmap c = build_heatmap({outside}, Side::Attack, bounds, 0.0, &clamped);
  CHECK(clamped == 4);
  CHECK(c.at(0, 31) == doctest::Approx(0.5));

  // Dead players do not count.
  RoundLog dead = r;
  for (auto& t : dead.ticks) t.players[1].alive = false;
  CHECK(build_heatmap({dead}, Side::Attack, bounds).at(3, 7) == doctest::Approx(1.0));

  const Heatmap g = heatmap_grid(Rect{0, 0, 60, 40}, 2.0);
  CHECK(g.width == 30);
  CHECK(g.height == 20);
  CHECK_THROWS_AS(heatmap_grid(Rect{0, 0, 0, 10}), std::invalid_argument);
}

TEST_CASE("heatmap of a straight walk") {
  // Player 0 walks east 0.375 m per tick; everyone else is dead.
  RoundLog r = still_round(12, {Vec3{0.125, 0.5, 0}, Vec3{}, Vec3{}, Vec3{}});
  for (int t = 0; t < 12; ++t) {
    r.ticks[t].players[0].position = Vec3{0.125 + 0.375 * t, 0.5, 0};
    for (int p = 1; p < kNumPlayers; ++p) r.ticks[t].players[p].alive = false;
  }
  // Hand count of ticks per 1 m cell: x in [0,1) 3, [1,2) 2, [2,3) 3, [3,4) 3, [4,5) 1.
  const double expected[5] = {3, 2, 3, 3, 1};
  const Heatmap h = build_heatmap({r}, Side::Attack, Rect{0, 0, 32, 32});
  for (int x = 0; x < 5; ++x) CHECK(h.at(x, 0) == doctest::Approx(expected[x] / 12));
  CHECK(h.total() == doctest::Approx(1.0));
}

TEST_CASE("emd 1d") {
  CHECK(emd_1d({1, 0, 0, 0}, {0, 0, 0, 1}) == 3.0);
  CHECK(emd_1d({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(emd_1d({0.5, 0, 0.5}, {0, 1, 0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(emd_1d({1, 0}, {0.5, 0}), std::invalid_argument);
  CHECK_THROWS_AS(emd_1d({1}, {0.5, 0.5}), std::invalid_argument);

  std::mt19937_64 rng(3);
  const Heatmap p = random_heatmap(rng, 8, 8, 0.5);
  CHECK(emd_1d_no_location(p, p) == 0.0);
  // Location-free: a permutation of the cells changes nothing.
  Heatmap shuffled = p;
  std::shuffle(shuffled.mass.begin(), shuffled.mass.end(), rng);
  CHECK(emd_1d_no_location(p, shuffled) == 0.0);
  const Heatmap q = random_heatmap(rng, 8, 8, 0.0);
  CHECK(emd_1d_no_location(p, q) > 0.0);
  CHECK(emd_1d_no_location(p, q) == doctest::Approx(emd_1d_no_location(q, p)));
  CHECK(emd_1d_no_location(p, q) <= 9.0);
}

TEST_CASE("emd 2d anchors") {
  const Heatmap a = grid_with(5, 1, {{0, 1.0}});
  const Heatmap b = grid_with(5, 1, {{4, 1.0}});
  CHECK(emd_2d(a, b) == 4.0);
  CHECK(emd_2d(a, a) == 0.0);
  CHECK(asd(a, b) == 2.0);
  CHECK(asd(a, a) == 0.0);
  const Heatmap c = grid_with(4, 5, {{0, 1.0}});
  const Heatmap d = grid_with(4, 5, {{4 * 4 + 3, 1.0}});
  CHECK(emd_2d(c, d) == doctest::Approx(5.0).epsilon(1e-15));
  // Half the mass moves one cell.
  CHECK(emd_2d(grid_with(2, 1, {{0, 1.0}}), grid_with(2, 1, {{0, 0.5}, {1, 0.5}})) == doctest::Approx(0.5));
  CHECK_THROWS_AS(emd_2d(a, grid_with(5, 1, {})), std::invalid_argument);
  CHECK_THROWS_AS(emd_2d(a, c), std::invalid_argument);
}

TEST_CASE("emd 2d matches the LP oracle") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 60; ++k) {
    const int w = 1 + static_cast<int>(rng() % 6);
    const int h = 1 + static_cast<int>(rng() % 6);
    const double zeros = (k % 3) * 0.3;
    const Heatmap p = random_heatmap(rng, w, h, zeros);
    const Heatmap q = random_heatmap(rng, w, h, zeros);
    const double e = emd_2d(p, q);
    CHECK(e == doctest::Approx(lp_emd(p, q)).epsilon(1e-9));
    CHECK(std::abs(e - emd_2d(q, p)) < 1e-9);
  }
  // Degenerate inputs: uniform against a shifted uniform block, many ties.
  Heatmap u = grid_with(6, 6, {});
  Heatmap v = grid_with(6, 6, {});
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 3; ++x) {
      u.at(x, y) = 1.0 / 18;
      v.at(x + 3, y) = 1.0 / 18;
    }
  CHECK(emd_2d(u, v) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(emd_2d(u, v) == doctest::Approx(lp_emd(u, v)).epsilon(1e-9));
}

TEST_CASE("emd 1d and asd against direct recomputation") {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 200; ++k) {
    const auto p = random_probs(rng, 3, 0.2);
    const auto q = random_probs(rng, 3, 0.2);
    std::vector<std::vector<double>> cost(3, std::vector<double>(3));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cost[a][b] = std::abs(a - b);
    CHECK(std::abs(emd_1d(p, q) - lp_transport(p, q, cost)) <= 1e-9);
  }
  for (int k = 0; k < 20; ++k) {
    const Heatmap a = random_heatmap(rng, 7, 5, 0.3);
    const Heatmap b = random_heatmap(rng, 7, 5, 0.3);
    long double sum = 0.0L;
    for (std::size_t i = 0; i < a.mass.size(); ++i) sum += std::fabs(static_cast<long double>(a.mass[i]) - b.mass[i]);
    CHECK(asd(a, b) == doctest::Approx(static_cast<double>(sum)).epsilon(1e-15));
    // Metric behaviour on sampled pairs: symmetric and zero only on equal maps.
    CHECK(emd_2d(a, b) == emd_2d(b, a));
    CHECK(emd_2d(a, b) > 0.0);
    CHECK(emd_2d(b, b) == 0.0);
  }
}

TEST_CASE("emd 2d triangle inequality") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 30; ++k) {
    const Heatmap a = random_heatmap(rng, 5, 4, 0.4);
    const Heatmap b = random_heatmap(rng, 5, 4, 0.4);
    const Heatmap c = random_heatmap(rng, 5, 4, 0.4);
    CHECK(emd_2d(a, c) <= emd_2d(a, b) + emd_2d(b, c) + 1e-9);
  }
}

TEST_CASE("transport problem validation") {
  CHECK(transport_cost({1.0}, {1.0}, {{2.5}}) == 2.5);
  CHECK(transport_cost({0.3, 0.7}, {0.7, 0.3}, {{0, 1}, {1, 0}}) == doctest::Approx(0.4));
  CHECK_THROWS_AS(transport_cost({1.0}, {0.5}, {{1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(transport_cost({1.0}, {1.0}, {{1.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(transport_cost({-1.0, 2.0}, {1.0}, {{1.0}, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(transport_cost({}, {}, {}), std::invalid_argument);
}

TEST_CASE("color ramp and rendering") {
  CHECK(ramp_color(0.0) == Rgb{0, 0, 255});
  CHECK(ramp_color(1.0 / 3.0) == Rgb{0, 255, 0});
  CHECK(ramp_color(2.0 / 3.0) == Rgb{255, 255, 0});
  CHECK(ramp_color(1.0) == Rgb{255, 0, 0});
  CHECK(ramp_color(0.5) == Rgb{128, 255, 0});
  CHECK(ramp_color(-1.0) == Rgb{0, 0, 255});
  CHECK(ramp_color(7.0) == Rgb{255, 0, 0});

  const fs::path dir = fs::temp_directory_path() / "tacbot_test_render";
  fs::create_directories(dir);

  Heatmap hot = grid_with(3, 2, {{1, 1.0}});  // cell (1, 0): bottom row
  render_heatmap(hot, dir / "hot.ppm", 2);
  const std::string img = slurp(dir / "hot.ppm");
  const std::string header = "P6\n6 4\n255\n";
  REQUIRE(img.size() == header.size() + 6 * 4 * 3);
  CHECK(img.substr(0, header.size()) == header);
  auto pixel = [&](int x, int y) {
    const std::size_t o = header.size() + (static_cast<std::size_t>(y) * 6 + x) * 3;
    return Rgb{static_cast<std::uint8_t>(img[o]), static_cast<std::uint8_t>(img[o + 1]),
               static_cast<std::uint8_t>(img[o + 2])};
  };
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      const bool is_hot = y >= 2 && (x == 2 || x == 3);
      CHECK(pixel(x, y) == (is_hot ? Rgb{255, 0, 0} : Rgb{0, 0, 255}));
    }

  Heatmap flat = grid_with(2, 2, {{0, 0.25}, {1, 0.25}, {2, 0.25}, {3, 0.25}});
  render_heatmap(flat, dir / "flat.ppm", 1);
  const std::string f = slurp(dir / "flat.ppm");
  const std::string fh = "P6\n2 2\n255\n";
  for (std::size_t k = fh.size(); k < f.size(); k += 3)
    CHECK(Rgb{static_cast<std::uint8_t>(f[k]), static_cast<std::uint8_t>(f[k + 1]),
              static_cast<std::uint8_t>(f[k + 2])} == Rgb{128, 255, 0});
  CHECK_THROWS_AS(render_heatmap(hot, dir / "x.ppm", 0), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("inference benchmark") {
  const auto cfg = NetworkConfig::preset("tiny");
  const BenchResult r = bench_inference(cfg, 5, 100, 1);
  CHECK(r.iterations == 100);
  CHECK(r.parameters == count_params(cfg));
  CHECK(r.mean_ms > 0.0);
  CHECK(r.std_ms >= 0.0);
  CHECK(!r.cpu.empty());
  CHECK_THROWS_AS(bench_inference(cfg, 0, 99), std::invalid_argument);
}
