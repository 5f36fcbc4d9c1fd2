#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tacbot/dataset.hpp"
#include "tacbot/net.hpp"

namespace tacbot {

// --- Behavioral features ---------------------------------------------------------

/// One record per (player, round). Counts are per player, not per team.
struct BehaviorFeatures {
  int round_id = 0;
  int player_id = 0;
  Team team = Team::Attacker;
  Role role = Role::Controller;
  int duration = 0;          // round length in ticks
  int alive_ticks = 0;
  double mean_speed = 0.0;   // planar m/s over alive ticks
  int shots = 0;
  double shots_per_kill = 0.0;  // shots / max(kills, 1)
  int kills = 0;
  int deaths = 0;
  int assists = 0;
  int plant_attempts = 0;    // 4-key press onsets while attacking
  int plant_successes = 0;
  int defuse_attempts = 0;   // 4-key press onsets while defending
  int defuse_successes = 0;
  int ability_uses = 0;
};

class LogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws LogError for logs with unfinished rounds or out-of-range ids.
std::vector<BehaviorFeatures> extract_features(const std::vector<RoundLog>& rounds);

enum class Feature { Duration, Speed, Shots, ShotsPerKill, Kills, Abilities };
const char* to_string(Feature f);
const std::vector<Feature>& all_features();
/// Feature value as a real number (duration in ticks).
double feature_value(const BehaviorFeatures& b, Feature f);

// --- Histograms and divergences ------------------------------------------------------

/// Buckets [origin + k * width, origin + (k + 1) * width).
struct BucketSpec {
  double width = 1.0;
  double origin = -0.5;
};

/// Integer buckets for counts, 1 s bins for durations in ticks, 0.25 m/s for
/// speed.
BucketSpec bucket_spec(Feature f);

struct Histogram {
  std::vector<double> edges;          // bucket count + 1, ascending
  std::vector<double> probabilities;  // sums to 1
  std::size_t sample_count = 0;
};

/// Histogram over the buckets spanning every value in `support` (pass the
/// union of both compared samples so the edges agree). Throws
/// std::invalid_argument on an empty `values` or a value outside the support.
Histogram histogram(const std::vector<double>& values, const BucketSpec& spec,
                    const std::vector<double>& support);
Histogram histogram(const std::vector<double>& values, const BucketSpec& spec);

/// Natural-log KL(P || Q); +infinity when P has mass where Q has none.
/// Throws std::invalid_argument on mismatched edges.
double kl(const Histogram& p, const Histogram& q);
/// Jensen-Shannon divergence in nats, in [0, ln 2].
double js(const Histogram& p, const Histogram& q);

/// JS of one feature between two sets of records.
double feature_js(const std::vector<BehaviorFeatures>& a, const std::vector<BehaviorFeatures>& b,
                  Feature f);

struct DivergenceRow {
  std::string side;  // "attack" or "defence"
  Feature feature = Feature::Duration;
  double js = 0.0;
  std::size_t samples_a = 0;
  std::size_t samples_b = 0;
};

/// Per-side, per-feature JS table.
std::vector<DivergenceRow> divergence_table(const std::vector<BehaviorFeatures>& a,
                                            const std::vector<BehaviorFeatures>& b);

// --- Heatmaps ---------------------------------------------------------------------

struct Heatmap {
  int width = 0;
  int height = 0;
  double cell_w = 1.0;  // meters
  double cell_h = 1.0;
  Vec2 origin;          // map-frame corner of cell (0, 0)
  std::vector<double> mass;  // row-major, index y * width + x

  double at(int x, int y) const { return mass[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return mass[static_cast<std::size_t>(y) * width + x]; }
  double total() const;
};

/// Empty grid over `bounds`: `cells` x `cells` when cell_size <= 0, otherwise
/// square cells of cell_size meters.
Heatmap heatmap_grid(const Rect& bounds, double cell_size = 0.0, int cells = 32);

enum class Side { Attack, Defence };

/// Counts one unit per alive player-tick of the given side in the cell
/// holding the player, then normalizes. Positions outside the grid are
/// clamped into it and counted in `clamped`.
Heatmap build_heatmap(const std::vector<RoundLog>& rounds, Side side, const Rect& bounds,
                      double cell_size = 0.0, int* clamped = nullptr);

/// Closed-form 1-D transport between two bucket distributions of equal
/// total mass, in bucket-index units.
double emd_1d(const std::vector<double>& p, const std::vector<double>& q);

/// Histograms each heatmap's cell values (each cell counted once) into
/// n_buckets equal-width buckets over the joint value range, then returns
/// emd_1d of the two.
double emd_1d_no_location(const Heatmap& p, const Heatmap& q, int n_buckets = 10);

/// Exact optimal transport between two normalized heatmaps with Euclidean
/// ground distance between cell centers in cell units.
double emd_2d(const Heatmap& p, const Heatmap& q);

/// Exact transportation problem: minimum sum of flow * cost moving `supply`
/// onto `demand` (equal totals). Transportation simplex seeded with the
/// least-cost rule.
double transport_cost(const std::vector<double>& supply, const std::vector<double>& demand,
                      const std::vector<std::vector<double>>& cost);

/// Sum over cells of |p - q|.
double asd(const Heatmap& p, const Heatmap& q);

// --- Rendering --------------------------------------------------------------------

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Piecewise-linear ramp over t in [0, 1]: blue (0, 0, 255) at 0, green
/// (0, 255, 0) at 1/3, yellow (255, 255, 0) at 2/3, red (255, 0, 0) at 1;
/// channels rounded to the nearest integer.
Rgb ramp_color(double t);

/// Binary PPM (P6), `scale` x `scale` pixels per cell, north up. Cell value
/// v maps to t = v / max cell; a heatmap whose cells are all equal maps to
/// t = 0.5.
void render_heatmap(const Heatmap& h, const std::filesystem::path& path, int scale = 8);

// --- Inference latency ------------------------------------------------------------------

struct BenchResult {
  std::string model;
  std::int64_t parameters = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  int iterations = 0;
  std::string cpu;
};

/// Single-thread, single-precision, batch-1 forward steps in inference mode
/// on synthetic observations. Throws std::invalid_argument for n_iters < 100.
BenchResult bench_inference(const NetworkConfig& config, int n_warmup, int n_iters,
                            std::uint64_t seed = 0);

/// CPU model name from /proc/cpuinfo, or "unknown".
std::string cpu_descriptor();

}  // namespace tacbot
