#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tacbot/eval.hpp"
#include "tacbot/policy.hpp"
#include "tacbot/train.hpp"

using namespace tacbot;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string dashed(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return key;
}

/// Options of one subcommand, settable from the command line or a JSON
/// config file. Explicit command-line values win over the file.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with settings for this subcommand");
  }

  template <typename T>
  CLI::Option* add(const std::string& key, T& var, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + dashed(key), var, help);
    if constexpr (!std::is_same_v<T, std::string>) opt->capture_default_str();
    entries_.push_back({key, opt, [&var](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }});
    return opt;
  }

  CLI::Option* flag(const std::string& key, bool& var, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + dashed(key), var, help);
    entries_.push_back({key, opt, [&var](const json& j) { var = j.get<bool>(); }, [&var] { return json(var); }});
    return opt;
  }

  /// Reads --config, if given. Throws UsageError on unknown keys or bad types.
  void load() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw UsageError("cannot read config " + config_path_);
    json cfg;
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("config " + config_path_ + ": " + e.what());
    }
    if (!cfg.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
      if (it == entries_.end()) throw UsageError("unknown config key '" + key + "'");
      if (it->option->count() > 0) continue;
      try {
        it->set(value);
      } catch (const json::exception& e) {
        throw UsageError("config key '" + key + "': " + e.what());
      }
    }
  }

  json resolved() const {
    json j = json::object();
    for (const auto& e : entries_) j[e.key] = e.get();
    return j;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };
  CLI::App* app_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

void require_dir(const std::string& path, const std::string& what) {
  require(!path.empty(), what + " is required");
  require(fs::is_directory(path), what + " '" + path + "' is not a directory");
}

fs::path prepare_out(const std::string& out, const std::string& command, const json& settings) {
  require(!out.empty(), "--out is required");
  fs::create_directories(out);
  json echo = {{"command", command}, {"settings", settings}};
  std::ofstream f(fs::path(out) / "resolved_config.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write to " + out);
  f << echo.dump(2) << '\n';
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::shared_ptr<const MapGeometry> load_map_arg(const std::string& name) {
  require(!name.empty(), "--map is required");
  return std::make_shared<const MapGeometry>(resolve_map(name));
}

// --- gen-map-template ---------------------------------------------------------------

struct MapTemplateArgs {
  std::string map = "ascent_mini";
  std::string out;
};

void run_map_template(const MapTemplateArgs& a, const json& settings) {
  const fs::path out = prepare_out(a.out, "gen-map-template", settings);
  const MapGeometry m = resolve_map(a.map);
  write_text(out / "map.txt", map_to_text(m));
  std::printf("wrote %s\n", (out / "map.txt").c_str());
}

// --- gen-data ---------------------------------------------------------------------

struct GenDataArgs {
  std::string map = "ascent_mini";
  int matches = 1;
  int rounds_per_match = 2;
  std::uint64_t seed = 0;
  std::string policy = "expert";
  std::string roster;
  std::string out;
};

void run_gen_data(const GenDataArgs& a, const json& settings) {
  require(a.matches >= 1, "--matches must be at least 1");
  require(a.rounds_per_match >= 1, "--rounds-per-match must be at least 1");
  require(a.policy == "expert" || a.policy == "tracker" || a.policy == "random",
          "--policy must be expert, tracker or random");
  require(a.roster.empty() || a.policy == "expert", "--roster only applies to the expert policy");
  auto roster = default_roster();
  if (!a.roster.empty()) {
    std::ifstream in(a.roster);
    require(static_cast<bool>(in), "cannot read roster " + a.roster);
    const json j = json::parse(in);
    require(j.is_array() && j.size() == kNumPlayers, "roster must be an array of 4 profiles");
    for (int i = 0; i < kNumPlayers; ++i) {
      roster[i] = j[i].get<ExpertProfile>();
      roster[i].validate();
    }
  }
  auto map = load_map_arg(a.map);
  const fs::path out = prepare_out(a.out, "gen-data", settings);
  Dataset d;
  if (a.policy == "expert") {
    d = generate_dataset(a.matches, roster, map, a.seed, a.rounds_per_match);
  } else if (a.policy == "tracker") {
    d = generate_tracker_dataset(a.matches, map, a.seed, a.rounds_per_match);
  } else {
    RandomDriver driver;
    d = run_matches(map, driver, a.matches, a.seed, a.rounds_per_match, true);
    d.manifest["policy"] = "random";
  }
  save_dataset(d, out);
  std::printf("%zu rounds, %zu trajectories, %lld timesteps (%lld alive) -> %s\n", d.rounds.size(),
              d.trajectories.size(), static_cast<long long>(d.total_timesteps()),
              static_cast<long long>(d.alive_timesteps()), out.c_str());
}

// --- train --------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string preset = "A-small";
  TrainConfig config;
  std::string resume;
  bool shuffle_labels = false;
  bool quiet = false;
  std::string out;
};

void run_train(TrainArgs a, const json& settings) {
  require_dir(a.data, "--data");
  NetworkConfig net;
  try {
    net = NetworkConfig::preset(a.preset);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  try {
    a.config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  // Load everything that can fail before touching the output directory.
  TrainOptions opts;
  if (!a.resume.empty()) {
    opts.resume = load_checkpoint(a.resume);
    if (!(opts.resume->params.config == net))
      throw std::runtime_error("checkpoint network does not match preset " + a.preset);
  }
  Dataset d = load_dataset(a.data, false);
  if (d.trajectories.empty()) throw std::runtime_error("dataset has no trajectories");
  if (a.shuffle_labels) {
    const Split split = split_trajectories(d.trajectories, a.config.eval_fraction, a.config.seed);
    d.trajectories = tacbot::shuffle_labels(std::move(d.trajectories), split.train, a.config.seed);
  }
  const fs::path out = prepare_out(a.out, "train", settings);
  opts.out_dir = out;
  opts.verbose = !a.quiet;
  const TrainResult r = bc_train(d.trajectories, net, a.config, opts);
  const auto& last = r.report.epochs.back();
  std::printf("best epoch %d held-out loss %.4f; last epoch %d aim %.3f (majority %.3f)%s\n", r.report.best_epoch,
              r.report.best_heldout_loss, last.epoch, last.heldout.aim_accuracy, r.report.baseline.accuracy,
              r.report.diverged ? " [diverged]" : "");
}

// --- rollout ------------------------------------------------------------------------

struct RolloutArgs {
  std::string checkpoint;
  std::string map = "ascent_mini";
  int matches = 1;
  int rounds_per_match = 2;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool record = false;
  std::string out;
};

void run_rollout(const RolloutArgs& a, const json& settings) {
  require(!a.checkpoint.empty(), "--checkpoint is required");
  require(fs::exists(a.checkpoint), "checkpoint '" + a.checkpoint + "' does not exist");
  require(a.matches >= 1, "--matches must be at least 1");
  require(a.rounds_per_match >= 1, "--rounds-per-match must be at least 1");
  require(a.temperature >= 0.0, "--temperature must be non-negative");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  auto map = load_map_arg(a.map);
  const fs::path out = prepare_out(a.out, "rollout", settings);
  const Dataset d = model_rollout(ck.params, map, a.matches, a.temperature, a.seed, a.rounds_per_match, a.record);
  save_dataset(d, out);
  std::printf("%zu rounds -> %s\n", d.rounds.size(), out.c_str());
}

// --- eval ---------------------------------------------------------------------------

struct EvalArgs {
  std::string a;
  std::string b;
  std::string map;
  int emd_buckets = 10;
  double cell_size = 0.0;
  int scale = 8;
  std::string out;
};

std::string format_js_table(const std::vector<DivergenceRow>& rows) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %10s %10s\n", "feature", "attack", "defence");
  s << line;
  for (Feature f : all_features()) {
    double att = NAN, def = NAN;
    for (const auto& r : rows) {
      if (r.feature != f) continue;
      (r.side == "attack" ? att : def) = r.js;
    }
    std::snprintf(line, sizeof line, "%-16s %10.4f %10.4f\n", to_string(f), att, def);
    s << line;
  }
  return s.str();
}

void run_eval(const EvalArgs& a, const json& settings) {
  require_dir(a.a, "--a");
  if (!a.b.empty()) require_dir(a.b, "--b");
  require(a.emd_buckets >= 1, "--emd-buckets must be at least 1");
  require(a.scale >= 1, "--scale must be at least 1");
  Dataset da = load_dataset(a.a);
  std::vector<RoundLog> ra, rb;
  if (a.b.empty()) {
    // Self-similarity control: even matches against odd matches.
    for (auto& r : da.rounds) (r.match_id % 2 == 0 ? ra : rb).push_back(r);
  } else {
    ra = da.rounds;
    rb = load_dataset(a.b).rounds;
  }
  if (ra.empty() || rb.empty()) throw std::runtime_error("eval needs rounds on both sides");
  auto map = load_map_arg(a.map.empty() ? ra.front().map_name : a.map);
  const fs::path out = prepare_out(a.out, "eval", settings);

  const auto fa = extract_features(ra);
  const auto fb = extract_features(rb);
  const auto rows = divergence_table(fa, fb);
  std::ostringstream csv;
  csv << "side,feature,js,samples_a,samples_b\n";
  for (const auto& r : rows)
    csv << r.side << ',' << to_string(r.feature) << ',' << r.js << ',' << r.samples_a << ',' << r.samples_b << '\n';
  write_text(out / "js_divergence.csv", csv.str());
  const std::string js_text = format_js_table(rows);
  write_text(out / "js_divergence.txt", js_text);

  std::ostringstream dcsv, dtxt;
  dcsv << "side,emd_1d,emd_2d,asd,clamped_a,clamped_b\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %10s %10s %10s\n", "side", "EMD-1D", "EMD-2D", "ASD");
  dtxt << line;
  for (Side side : {Side::Attack, Side::Defence}) {
    const char* name = side == Side::Attack ? "attack" : "defence";
    int ca = 0, cb = 0;
    const Heatmap ha = build_heatmap(ra, side, map->bounds, a.cell_size, &ca);
    const Heatmap hb = build_heatmap(rb, side, map->bounds, a.cell_size, &cb);
    if (ca + cb > 0) std::fprintf(stderr, "warning: %d positions outside the map bounds were clamped\n", ca + cb);
    render_heatmap(ha, out / (std::string("heatmap_a_") + name + ".ppm"), a.scale);
    render_heatmap(hb, out / (std::string("heatmap_b_") + name + ".ppm"), a.scale);
    if (ha.total() == 0.0 || hb.total() == 0.0) continue;
    const double e1 = emd_1d_no_location(ha, hb, a.emd_buckets);
    const double e2 = emd_2d(ha, hb);
    const double d = asd(ha, hb);
    dcsv << name << ',' << e1 << ',' << e2 << ',' << d << ',' << ca << ',' << cb << '\n';
    std::snprintf(line, sizeof line, "%-8s %10.4f %10.4f %10.4f\n", name, e1, e2, d);
    dtxt << line;
  }
  write_text(out / "distances.csv", dcsv.str());
  write_text(out / "distances.txt", dtxt.str());
  std::printf("Jensen-Shannon divergence (%zu vs %zu rounds)\n%s\nDistance measures\n%s", ra.size(), rb.size(),
              js_text.c_str(), dtxt.str().c_str());
}

// --- bench --------------------------------------------------------------------------

struct BenchArgs {
  std::string presets = "A,B,C,D";
  int warmup = 20;
  int iters = 200;
  std::uint64_t seed = 0;
  std::string out;
};

void run_bench(const BenchArgs& a, const json& settings) {
  std::vector<NetworkConfig> configs;
  std::stringstream ss(a.presets);
  for (std::string name; std::getline(ss, name, ',');) {
    try {
      configs.push_back(NetworkConfig::preset(name));
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  require(!configs.empty(), "--presets is empty");
  require(a.iters >= 100, "--iters must be at least 100");
  require(a.warmup >= 0, "--warmup must be non-negative");
  const fs::path out = prepare_out(a.out, "bench", settings);
  std::ostringstream csv;
  csv << "model,parameters,mean_ms,std_ms,iterations,cpu\n";
  std::printf("%-8s %12s %20s\n", "model", "parameters", "CPU inference (ms)");
  std::string cpu;
  for (const auto& c : configs) {
    const BenchResult r = bench_inference(c, a.warmup, a.iters, a.seed);
    cpu = r.cpu;
    csv << r.model << ',' << r.parameters << ',' << r.mean_ms << ',' << r.std_ms << ',' << r.iterations << ",\""
        << r.cpu << "\"\n";
    std::printf("%-8s %12lld %12.3f +- %.3f\n", r.model.c_str(), static_cast<long long>(r.parameters), r.mean_ms,
                r.std_ms);
  }
  std::printf("cpu: %s\n", cpu.c_str());
  write_text(out / "bench.csv", csv.str());
}

// --- render-heatmap -------------------------------------------------------------------

struct RenderArgs {
  std::string data;
  std::string side = "attack";
  std::string map;
  double cell_size = 0.0;
  int scale = 8;
  std::string out;
};

void run_render(const RenderArgs& a, const json& settings) {
  require_dir(a.data, "--data");
  require(a.side == "attack" || a.side == "defence", "--side must be attack or defence");
  require(a.scale >= 1, "--scale must be at least 1");
  const Dataset d = load_dataset(a.data);
  if (d.rounds.empty()) throw std::runtime_error("dataset has no rounds");
  auto map = load_map_arg(a.map.empty() ? d.rounds.front().map_name : a.map);
  const fs::path out = prepare_out(a.out, "render-heatmap", settings);
  int clamped = 0;
  const Heatmap h =
      build_heatmap(d.rounds, a.side == "attack" ? Side::Attack : Side::Defence, map->bounds, a.cell_size, &clamped);
  if (clamped > 0) std::fprintf(stderr, "warning: %d positions outside the map bounds were clamped\n", clamped);
  const fs::path img = out / ("heatmap_" + a.side + ".ppm");
  render_heatmap(h, img, a.scale);
  std::ostringstream csv;
  for (int y = h.height - 1; y >= 0; --y)
    for (int x = 0; x < h.width; ++x) csv << h.at(x, y) << (x + 1 == h.width ? '\n' : ',');
  write_text(out / ("heatmap_" + a.side + ".csv"), csv.str());
  std::printf("%dx%d heatmap -> %s\n", h.width, h.height, img.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactical shooter bot toolkit: simulation, demonstrations, cloning and evaluation"};
  app.require_subcommand(1);
  std::function<void()> action;

  MapTemplateArgs mt;
  auto* c_mt = app.add_subcommand("gen-map-template", "Write an editable map file");
  Settings s_mt(c_mt);
  s_mt.add("map", mt.map, "Built-in map name or map file");
  s_mt.add("out", mt.out, "Output directory");
  c_mt->callback([&] { action = [&] { s_mt.load(); run_map_template(mt, s_mt.resolved()); }; });

  GenDataArgs gd;
  auto* c_gd = app.add_subcommand("gen-data", "Generate demonstration data");
  Settings s_gd(c_gd);
  s_gd.add("map", gd.map, "Built-in map name or map file");
  s_gd.add("matches", gd.matches, "Number of matches");
  s_gd.add("rounds_per_match", gd.rounds_per_match, "Rounds per match (sides swap every round)");
  s_gd.add("seed", gd.seed, "Seed");
  s_gd.add("policy", gd.policy, "expert, tracker or random");
  s_gd.add("roster", gd.roster, "JSON file with four expert profiles");
  s_gd.add("out", gd.out, "Output directory");
  c_gd->callback([&] { action = [&] { s_gd.load(); run_gen_data(gd, s_gd.resolved()); }; });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Behavior cloning on a dataset");
  Settings s_tr(c_tr);
  s_tr.add("data", tr.data, "Dataset directory");
  s_tr.add("preset", tr.preset, "Network preset (A-F, A-small, tiny)");
  s_tr.add("learning_rate", tr.config.learning_rate, "Adam learning rate");
  s_tr.add("weight_decay", tr.config.weight_decay, "L2 coefficient, or decay rate with --lr-decay");
  s_tr.flag("lr_decay", tr.config.lr_decay, "Use the decay value as a learning-rate schedule");
  s_tr.add("batch_size", tr.config.batch_size, "Windows per batch");
  s_tr.add("epochs", tr.config.epochs, "Epochs");
  s_tr.add("bptt_window", tr.config.bptt_window, "Timesteps per window");
  s_tr.add("eval_fraction", tr.config.eval_fraction, "Held-out share of trajectories");
  s_tr.add("seed", tr.config.seed, "Seed for init, split, shuffling and dropout");
  s_tr.flag("reweight", tr.config.reweight, "Inverse-frequency class weights");
  s_tr.add("resume", tr.resume, "Checkpoint to continue from");
  s_tr.flag("shuffle_labels", tr.shuffle_labels, "Permute training actions (control run)");
  s_tr.flag("quiet", tr.quiet, "No per-epoch output");
  s_tr.add("out", tr.out, "Output directory");
  c_tr->callback([&] { action = [&] { s_tr.load(); run_train(tr, s_tr.resolved()); }; });

  RolloutArgs ro;
  auto* c_ro = app.add_subcommand("rollout", "Play matches with a trained model");
  Settings s_ro(c_ro);
  s_ro.add("checkpoint", ro.checkpoint, "Checkpoint file");
  s_ro.add("map", ro.map, "Built-in map name or map file");
  s_ro.add("matches", ro.matches, "Number of matches");
  s_ro.add("rounds_per_match", ro.rounds_per_match, "Rounds per match");
  s_ro.add("temperature", ro.temperature, "Sampling temperature, 0 for argmax");
  s_ro.add("seed", ro.seed, "Seed");
  s_ro.flag("record", ro.record, "Also write trajectories");
  s_ro.add("out", ro.out, "Output directory");
  c_ro->callback([&] { action = [&] { s_ro.load(); run_rollout(ro, s_ro.resolved()); }; });

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Compare the behavior in two datasets");
  Settings s_ev(c_ev);
  s_ev.add("a", ev.a, "Reference dataset directory");
  s_ev.add("b", ev.b, "Compared dataset directory (omit to split --a in halves)");
  s_ev.add("map", ev.map, "Map for heatmap bounds (default: the logged map)");
  s_ev.add("emd_buckets", ev.emd_buckets, "Buckets for the location-free EMD");
  s_ev.add("cell_size", ev.cell_size, "Heatmap cell size in meters (0: 32x32 grid)");
  s_ev.add("scale", ev.scale, "Pixels per heatmap cell");
  s_ev.add("out", ev.out, "Output directory");
  c_ev->callback([&] { action = [&] { s_ev.load(); run_eval(ev, s_ev.resolved()); }; });

  BenchArgs be;
  auto* c_be = app.add_subcommand("bench", "CPU inference latency per preset");
  Settings s_be(c_be);
  s_be.add("presets", be.presets, "Comma-separated presets");
  s_be.add("warmup", be.warmup, "Untimed steps");
  s_be.add("iters", be.iters, "Timed steps (at least 100)");
  s_be.add("seed", be.seed, "Seed for weights and inputs");
  s_be.add("out", be.out, "Output directory");
  c_be->callback([&] { action = [&] { s_be.load(); run_bench(be, s_be.resolved()); }; });

  RenderArgs rh;
  auto* c_rh = app.add_subcommand("render-heatmap", "Render a position heatmap of a dataset");
  Settings s_rh(c_rh);
  s_rh.add("data", rh.data, "Dataset directory");
  s_rh.add("side", rh.side, "attack or defence");
  s_rh.add("map", rh.map, "Map for bounds (default: the logged map)");
  s_rh.add("cell_size", rh.cell_size, "Cell size in meters (0: 32x32 grid)");
  s_rh.add("scale", rh.scale, "Pixels per cell");
  s_rh.add("out", rh.out, "Output directory");
  c_rh->callback([&] { action = [&] { s_rh.load(); run_render(rh, s_rh.resolved()); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    action();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
