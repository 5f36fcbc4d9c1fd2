#include "tacbot/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tacbot/policy.hpp"

namespace tacbot {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be non-negative");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (bptt_window < 1) fail("bptt_window must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) fail("eval_fraction must be in (0, 1)");
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
       {"lr_decay", c.lr_decay},           {"batch_size", c.batch_size},
       {"epochs", c.epochs},               {"bptt_window", c.bptt_window},
       {"beta1", c.beta1},                 {"beta2", c.beta2},
       {"epsilon", c.epsilon},             {"seed", c.seed},
       {"eval_fraction", c.eval_fraction}, {"reweight", c.reweight}};
}

void from_json(const json& j, TrainConfig& c) {
  const json known = TrainConfig{};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("train config: unknown key '" + key + "'");
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.lr_decay = j.value("lr_decay", d.lr_decay);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.bptt_window = j.value("bptt_window", d.bptt_window);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.seed = j.value("seed", d.seed);
  c.eval_fraction = j.value("eval_fraction", d.eval_fraction);
  c.reweight = j.value("reweight", d.reweight);
  c.validate();
}

std::vector<Window> make_windows(const std::vector<Trajectory>& trajectories,
                                 const std::vector<int>& which, int window) {
  if (window < 1) throw std::invalid_argument("make_windows: window must be >= 1");
  std::vector<Window> out;
  for (int i : which) {
    const int n = trajectories.at(i).alive_frames();
    for (int s = 0; s < n; s += window) out.push_back({i, s, std::min(window, n - s)});
  }
  return out;
}

Split split_trajectories(const std::vector<Trajectory>& trajectories, double eval_fraction,
                         std::uint64_t seed) {
  std::vector<int> usable;
  for (int i = 0; i < static_cast<int>(trajectories.size()); ++i)
    if (trajectories[i].alive_frames() > 0) usable.push_back(i);
  std::mt19937_64 rng(mix_seed(seed, 0x73706c6974ULL));
  std::shuffle(usable.begin(), usable.end(), rng);
  std::size_t held = static_cast<std::size_t>(std::llround(eval_fraction * usable.size()));
  if (usable.size() >= 2) held = std::clamp<std::size_t>(held, 1, usable.size() - 1);
  Split s;
  s.heldout.assign(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(held));
  s.train.assign(usable.begin() + static_cast<std::ptrdiff_t>(held), usable.end());
  std::sort(s.heldout.begin(), s.heldout.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

SequenceBatch make_batch(const std::vector<Trajectory>& trajectories, const std::vector<Window>& windows) {
  int length = 0;
  for (const Window& w : windows) length = std::max(length, w.length);
  const int B = static_cast<int>(windows.size());
  SequenceBatch batch(length, B);
  for (int t = 0; t < length; ++t) {
    batch.observations[t] = Mat<double>::Zero(kObservationSize, B);
    for (int b = 0; b < B; ++b) {
      const Window& w = windows[b];
      if (t >= w.length) continue;
      const Trajectory& tr = trajectories[w.trajectory];
      const float* obs = tr.observation(w.start + t);
      double* dst = batch.observations[t].col(b).data();
      for (int k = 0; k < kObservationSize; ++k) dst[k] = obs[k];
      const Action& a = tr.actions[w.start + t];
      batch.aim[t][b] = a.aim.index;
      batch.keys[t][b] = a.keys.bits;
      batch.mask[t][b] = 1;
    }
  }
  return batch;
}

void to_json(json& j, const Metrics& m) {
  j = {{"loss", m.loss}, {"aim_accuracy", m.aim_accuracy}, {"key_accuracy", m.key_accuracy}, {"steps", m.steps}};
}

Metrics evaluate(const NetworkParams& params, const std::vector<Trajectory>& trajectories,
                 const std::vector<int>& which, int window, int batch_size) {
  const std::vector<Window> windows = make_windows(trajectories, which, window);
  Metrics m;
  double loss_sum = 0.0;
  std::int64_t aim_correct = 0;
  std::array<std::int64_t, kNumKeys> key_correct{};
  for (std::size_t at = 0; at < windows.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::vector<Window> part(windows.begin() + static_cast<std::ptrdiff_t>(at),
                                   windows.begin() + static_cast<std::ptrdiff_t>(
                                                         std::min(windows.size(), at + batch_size)));
    const SequenceBatch batch = make_batch(trajectories, part);
    HiddenState h = zero_hidden<double>(params.config, batch.batch);
    const LossResult r = loss_and_gradient(params, batch, h, Mode::Infer, nullptr, nullptr);
    loss_sum += r.loss * r.valid_steps;
    m.steps += r.valid_steps;
    aim_correct += r.aim_correct;
    for (int k = 0; k < kNumKeys; ++k) key_correct[k] += r.key_correct[k];
  }
  if (m.steps > 0) {
    const double n = static_cast<double>(m.steps);
    m.loss = loss_sum / n;
    m.aim_accuracy = aim_correct / n;
    for (int k = 0; k < kNumKeys; ++k) m.key_accuracy[k] = key_correct[k] / n;
  }
  return m;
}

MajorityBaseline majority_baseline(const std::vector<Trajectory>& trajectories,
                                   const std::vector<int>& fit_on, const std::vector<int>& measure_on) {
  std::array<std::int64_t, kNumAimActions> counts{};
  for (int i : fit_on)
    for (const Action& a : trajectories.at(i).actions) ++counts[a.aim.index];
  MajorityBaseline b;
  b.aim_index = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  std::int64_t hit = 0, total = 0;
  for (int i : measure_on)
    for (const Action& a : trajectories.at(i).actions) {
      hit += a.aim.index == b.aim_index;
      ++total;
    }
  b.accuracy = total > 0 ? static_cast<double>(hit) / total : 0.0;
  return b;
}

void to_json(json& j, const TrainReport& r) {
  json epochs = json::array();
  for (const EpochRecord& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"heldout", e.heldout}, {"seconds", e.seconds}});
  j = {{"epochs", epochs},
       {"best_epoch", r.best_epoch},
       {"best_heldout_loss", r.best_heldout_loss},
       {"majority_baseline", {{"aim_index", r.baseline.aim_index}, {"accuracy", r.baseline.accuracy}}},
       {"train_steps", r.train_steps},
       {"heldout_steps", r.heldout_steps},
       {"wall_seconds", r.wall_seconds},
       {"diverged", r.diverged},
       {"final_checkpoint", r.final_checkpoint}};
}

namespace {

constexpr double kMaxClassWeight = 10.0;

void class_weights(const std::vector<Trajectory>& trajectories, const std::vector<int>& which,
                   std::vector<double>& aim, std::vector<double>& keys) {
  std::array<double, kNumAimActions> count{};
  std::array<double, kNumKeys> pos{};
  double n = 0.0;
  for (int i : which)
    for (const Action& a : trajectories[i].actions) {
      ++count[a.aim.index];
      for (int k = 0; k < kNumKeys; ++k) pos[k] += a.keys.pressed(static_cast<Key>(k));
      ++n;
    }
  const double present = static_cast<double>(std::count_if(count.begin(), count.end(), [](double c) { return c > 0; }));
  aim.assign(kNumAimActions, 1.0);
  for (int c = 0; c < kNumAimActions; ++c)
    if (count[c] > 0) aim[c] = std::min(kMaxClassWeight, n / (present * count[c]));
  keys.assign(kNumKeys, 1.0);
  for (int k = 0; k < kNumKeys; ++k)
    if (pos[k] > 0) keys[k] = std::clamp((n - pos[k]) / pos[k], 1.0, kMaxClassWeight);
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

TrainResult bc_train(const std::vector<Trajectory>& trajectories, const NetworkConfig& net,
                     const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  net.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count(); };

  const Split split = split_trajectories(trajectories, config.eval_fraction, config.seed);
  if (split.train.empty() || split.heldout.empty())
    throw std::invalid_argument("bc_train: need at least two trajectories with alive frames");

  TrainResult result;
  TrainReport& report = result.report;
  for (int i : split.train) report.train_steps += trajectories[i].alive_frames();
  for (int i : split.heldout) report.heldout_steps += trajectories[i].alive_frames();
  report.baseline = majority_baseline(trajectories, split.train, split.heldout);

  NetworkParams params;
  AdamState adam;
  int start_epoch = 1;
  if (options.resume) {
    if (!(options.resume->params.config == net))
      throw std::invalid_argument("bc_train: checkpoint config does not match the network config");
    params = options.resume->params;
    adam = options.resume->optimizer;
    start_epoch = options.resume->epoch + 1;
  } else {
    params = init_params(net, config.seed);
  }
  if (adam.m.size() != params.values.size()) {
    adam.m.assign(params.values.size(), 0.0);
    adam.v.assign(params.values.size(), 0.0);
    adam.step = 0;
  }

  std::vector<double> aim_w, key_w;
  if (config.reweight) class_weights(trajectories, split.train, aim_w, key_w);

  auto save = [&](const NetworkParams& p, int epoch, const std::string& name, double heldout) {
    if (options.out_dir.empty()) return;
    std::filesystem::create_directories(options.out_dir);
    Checkpoint ck{p, epoch, adam, json{{"train_config", config}, {"heldout_loss", heldout}, {"kind", name}}};
    save_checkpoint(ck, options.out_dir / (name + ".ckpt"));
  };

  {
    EpochRecord e0;
    e0.epoch = start_epoch - 1;
    e0.train_loss = evaluate(params, trajectories, split.train, config.bptt_window, config.batch_size).loss;
    e0.heldout = evaluate(params, trajectories, split.heldout, config.bptt_window, config.batch_size);
    e0.seconds = elapsed();
    report.epochs.push_back(e0);
    report.best_epoch = e0.epoch;
    report.best_heldout_loss = e0.heldout.loss;
    result.params = params;
    save(params, e0.epoch, "best", e0.heldout.loss);
    if (options.verbose)
      std::fprintf(stderr, "epoch %d train %.4f heldout %.4f aim %.3f\n", e0.epoch, e0.train_loss,
                   e0.heldout.loss, e0.heldout.aim_accuracy);
  }
  result.last = {params, start_epoch - 1, adam, json::object()};

  const std::vector<Window> all_windows = make_windows(trajectories, split.train, config.bptt_window);
  std::vector<Window> windows;
  std::vector<double> grad;
  const int last_epoch = start_epoch - 1 + config.epochs;
  for (int epoch = start_epoch; epoch <= last_epoch; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    windows = all_windows;
    std::shuffle(windows.begin(), windows.end(), rng);
    const double lr = config.lr_decay ? config.learning_rate / (1.0 + config.weight_decay * (epoch - 1))
                                      : config.learning_rate;
    const double l2 = config.lr_decay ? 0.0 : config.weight_decay;
    const NetworkParams epoch_start = params;
    const AdamState adam_start = adam;

    double loss_sum = 0.0;
    std::int64_t steps = 0;
    bool diverged = false;
    for (std::size_t at = 0; at < windows.size(); at += static_cast<std::size_t>(config.batch_size)) {
      const std::vector<Window> part(
          windows.begin() + static_cast<std::ptrdiff_t>(at),
          windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), at + config.batch_size)));
      SequenceBatch batch = make_batch(trajectories, part);
      batch.aim_weight = aim_w;
      batch.key_pos_weight = key_w;
      HiddenState h = zero_hidden<double>(net, batch.batch);
      const LossResult r = loss_and_gradient(params, batch, h, Mode::Train, &rng, &grad);
      if (!std::isfinite(r.loss) || !all_finite(grad)) {
        diverged = true;
        break;
      }
      loss_sum += r.loss * r.valid_steps;
      steps += r.valid_steps;

      ++adam.step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
      for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double g = grad[i] + l2 * params.values[i];
        adam.m[i] = config.beta1 * adam.m[i] + (1.0 - config.beta1) * g;
        adam.v[i] = config.beta2 * adam.v[i] + (1.0 - config.beta2) * g * g;
        params.values[i] -= lr * (adam.m[i] / c1) / (std::sqrt(adam.v[i] / c2) + config.epsilon);
      }
      if (!all_finite(params.values)) {
        diverged = true;
        break;
      }
    }
    if (diverged) {
      params = epoch_start;
      adam = adam_start;
      report.diverged = true;
      if (options.verbose) std::fprintf(stderr, "epoch %d diverged; keeping the last good state\n", epoch);
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = steps > 0 ? loss_sum / steps : 0.0;
    rec.heldout = evaluate(params, trajectories, split.heldout, config.bptt_window, config.batch_size);
    rec.seconds = elapsed();
    report.epochs.push_back(rec);
    if (options.verbose)
      std::fprintf(stderr, "epoch %d train %.4f heldout %.4f aim %.3f (%.0fs)\n", epoch, rec.train_loss,
                   rec.heldout.loss, rec.heldout.aim_accuracy, rec.seconds);
    if (rec.heldout.loss < report.best_heldout_loss) {
      report.best_heldout_loss = rec.heldout.loss;
      report.best_epoch = epoch;
      result.params = params;
      save(params, epoch, "best", rec.heldout.loss);
    }
    result.last = {params, epoch, adam, json{{"train_config", config}, {"heldout_loss", rec.heldout.loss}, {"kind", "last"}}};
    save(params, epoch, "last", rec.heldout.loss);
  }

  report.wall_seconds = elapsed();
  report.final_checkpoint = options.out_dir.empty() ? "best@epoch" + std::to_string(report.best_epoch)
                                                    : (options.out_dir / "best.ckpt").string();
  if (!options.out_dir.empty()) {
    std::ofstream out(options.out_dir / "report.json", std::ios::trunc);
    out << json(report).dump(2) << '\n';
  }
  return result;
}

std::vector<Trajectory> shuffle_labels(std::vector<Trajectory> trajectories, const std::vector<int>& which,
                                       std::uint64_t seed) {
  std::vector<Action> pool;
  for (int i : which) pool.insert(pool.end(), trajectories.at(i).actions.begin(), trajectories.at(i).actions.end());
  std::mt19937_64 rng(mix_seed(seed, 0x7368756666ULL));
  std::shuffle(pool.begin(), pool.end(), rng);
  std::size_t at = 0;
  for (int i : which)
    for (Action& a : trajectories[i].actions) a = pool[at++];
  return trajectories;
}

}  // namespace tacbot
