#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "tacbot/net.hpp"

using namespace tacbot;

namespace {

Observation random_observation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<float> flat(kObservationSize);
  for (auto& v : flat) v = static_cast<float>(u(rng));
  return Observation::unflatten(flat);
}

Action random_action(std::mt19937_64& rng) {
  Action a;
  a.aim.index = std::uniform_int_distribution<int>(0, kNumAimActions - 1)(rng);
  a.keys.bits = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(0, 2047)(rng));
  return a;
}

double sequence_loss(const NetworkParams& p, const std::vector<Observation>& obs,
                     const std::vector<Action>& acts, Mode mode, std::uint64_t seed) {
  double loss = 0.0;
  backward(p, obs, acts, 0, mode, seed, &loss);
  return loss;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tacbot_test_net_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("presets follow the model table") {
  struct Row {
    const char* name;
    int filters;
    std::vector<int> pre, lstm, post;
  };
  const Row rows[] = {
      {"A", 8, {256}, {128}, {64}},
      {"B", 16, {512}, {256}, {128}},
      {"C", 16, {512}, {768}, {256}},
      {"D", 32, {1024}, {1024}, {512, 256}},
      {"E", 32, {1024, 1024}, {1024, 1024}, {1024, 512, 256}},
      {"F", 48, {1792, 1024, 1024}, {1024, 1024}, {1024, 512, 256}},
  };
  std::int64_t previous = 0;
  for (const Row& r : rows) {
    const NetworkConfig c = NetworkConfig::preset(r.name);
    CHECK(c.conv_filters == r.filters);
    CHECK(c.pre_lstm_dense == r.pre);
    CHECK(c.lstm_widths == r.lstm);
    CHECK(c.post_lstm_dense == r.post);
    CHECK(c.dropout == 0.5);
    CHECK(c.encoder_width == 4 * r.filters);
    const auto n = count_params(c);
    CHECK(n > previous);
    previous = n;
  }
  CHECK_THROWS_AS(NetworkConfig::preset("Z"), std::invalid_argument);
}

TEST_CASE("count_params: closed-form layer counts") {
  NetworkConfig c = NetworkConfig::preset("tiny");
  c.pre_lstm_dense = {4};
  c.post_lstm_dense = {8, 4};
  const auto layout = param_layout(c);
  auto block = [&](const std::string& name) {
    std::int64_t n = 0;
    for (const auto& t : layout)
      if (t.name.rfind(name + ".", 0) == 0) n += t.size();
    return n;
  };
  CHECK(block("conv") == 2 * (3 * 3 * 10 + 1));  // 182
  CHECK(block("post1") == 36);                   // dense 8 -> 4
  CHECK(block("lstm0") == 4 * ((4 + 4) * 4 + 4)); // 144

  // Hand derivation of the whole tiny preset.
  const NetworkConfig t = NetworkConfig::preset("tiny");
  const std::int64_t conv = 2 * 91;
  const std::int64_t enc = 8 * (27 + 1) + 8 * (48 + 1) + 8 * (11 + 1);
  const std::int64_t concat = 225 * 2 + 3 * 8;
  const std::int64_t pre = 8 * concat + 8;
  const std::int64_t lstm = 4 * 4 * (8 + 4) + 4 * 4;
  const std::int64_t post = 4 * 4 + 4;
  const std::int64_t heads = 165 * 4 + 165 + 11 * 4 + 11;
  CHECK(count_params(t) == conv + enc + pre + lstm + post + heads);

  // Layout is contiguous.
  std::int64_t off = 0;
  for (const auto& s : param_layout(t)) {
    CHECK(s.offset == off);
    off += s.size();
  }
}

TEST_CASE("init_params: deterministic, bounded, forget bias one") {
  const NetworkConfig c = NetworkConfig::preset("tiny");
  const NetworkParams a = init_params(c, 9);
  const NetworkParams b = init_params(c, 9);
  const NetworkParams d = init_params(c, 10);
  CHECK(a.values == b.values);
  CHECK(a.values != d.values);
  CHECK(a.size() == count_params(c));
  for (const auto& t : a.layout) {
    if (t.name == "lstm0.b") {
      for (int k = 0; k < t.rows; ++k) CHECK(a.values[t.offset + k] == (k >= 4 && k < 8 ? 1.0 : 0.0));
    } else if (t.name.ends_with(".b")) {
      for (int k = 0; k < t.rows; ++k) CHECK(a.values[t.offset + k] == 0.0);
    } else {
      double m = 0;
      for (std::int64_t k = 0; k < t.size(); ++k) m = std::max(m, std::abs(a.values[t.offset + k]));
      CHECK(m > 0.0);
      CHECK(m <= 1.0);
    }
  }
}

TEST_CASE("forward: zero input gives finite logits and a probability vector") {
  for (const char* name : {"tiny", "A"}) {
    const NetworkParams p = init_params(NetworkConfig::preset(name), 1);
    HiddenState h = zero_hidden<double>(p.config);
    Observation zero;
    zero.visual.values.fill(0.0);
    const ActionDistribution d = forward(p, zero, h);
    double sum = 0.0;
    for (double v : d.aim_probs()) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (double v : d.aim_logits) CHECK(std::isfinite(v));
    for (double v : d.key_probs()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("forward: infer mode is pure; train mode applies dropout") {
  const NetworkParams p = init_params(NetworkConfig::preset("tiny"), 2);
  std::mt19937_64 rng(5);
  const Observation o = random_observation(rng);
  HiddenState h1 = zero_hidden<double>(p.config), h2 = zero_hidden<double>(p.config);
  const auto a = forward(p, o, h1);
  const auto b = forward(p, o, h2);
  CHECK(a.aim_logits == b.aim_logits);
  CHECK(h1.h[0] == h2.h[0]);

  HiddenState h3 = zero_hidden<double>(p.config);
  std::mt19937_64 drop(1);
  const auto c = forward(p, o, h3, Mode::Train, &drop);
  CHECK(c.aim_logits != a.aim_logits);
  // The recurrent state itself is not dropped.
  CHECK(h3.h[0] == h1.h[0]);
}

TEST_CASE("forward: single LSTM step matches the closed-form cell") {
  NetworkConfig c;
  c.conv_filters = 1;
  c.encoder_width = 1;
  c.pre_lstm_dense = {1};
  c.lstm_widths = {1};
  c.post_lstm_dense = {1};
  NetworkParams p = init_params(c, 0);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  auto set = [&](const std::string& name, std::vector<double> v) {
    for (const auto& t : p.layout)
      if (t.name == name)
        for (std::size_t k = 0; k < v.size(); ++k) p.values[t.offset + k] = v[k];
  };
  set("pre0.b", {0.5});                              // x = relu(0.5)
  set("lstm0.W", {0.3, -0.2, 0.7, 0.4, 0.1, 0.6, -0.5, 0.9});  // column-major 4x2: [x | h]
  set("lstm0.b", {0.05, 1.0, -0.1, 0.2});
  set("post0.W", {1.0});
  set("aim.W", std::vector<double>(165, 0.0));
  set("aim.b", std::vector<double>(165, 0.0));
  for (const auto& t : p.layout)
    if (t.name == "aim.W") p.values[t.offset + 7] = 2.0;  // row 7 reads the post output

  HiddenState h = zero_hidden<double>(c);
  h.h[0](0, 0) = 0.25;
  h.c[0](0, 0) = -0.4;
  Observation zero;
  const auto d = forward(p, zero, h);

  const double x = 0.5, hp = 0.25, cp = -0.4;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i = sig(0.3 * x + 0.1 * hp + 0.05);
  const double f = sig(-0.2 * x + 0.6 * hp + 1.0);
  const double g = std::tanh(0.7 * x - 0.5 * hp - 0.1);
  const double o = sig(0.4 * x + 0.9 * hp + 0.2);
  const double cn = f * cp + i * g;
  const double hn = o * std::tanh(cn);
  CHECK(h.c[0](0, 0) == doctest::Approx(cn).epsilon(1e-14));
  CHECK(h.h[0](0, 0) == doctest::Approx(hn).epsilon(1e-14));
  CHECK(d.aim_logits[7] == doctest::Approx(2.0 * std::max(0.0, hn)).epsilon(1e-14));
}

TEST_CASE("bc_loss anchors") {
  ActionDistribution d;
  d.key_logits.fill(-60.0);
  Action target;
  target.aim.index = 17;
  CHECK(bc_loss(d, target) == doctest::Approx(std::log(165.0)).epsilon(1e-12));

  d.key_logits[3] = 60.0;
  target.keys.set(Key::D);
  CHECK(bc_loss(d, target) == doctest::Approx(std::log(165.0)).epsilon(1e-12));

  // Definition-level recomputation in extended precision.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    for (double& v : d.aim_logits) v = n(rng);
    for (double& v : d.key_logits) v = n(rng);
    const Action a = random_action(rng);
    long double z = 0;
    for (double v : d.aim_logits) z += std::exp(static_cast<long double>(v));
    long double expect = -std::log(std::exp(static_cast<long double>(d.aim_logits[a.aim.index])) / z);
    for (int k = 0; k < kNumKeys; ++k) {
      const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(d.key_logits[k])));
      expect -= a.keys.pressed(static_cast<Key>(k)) ? std::log(p) : std::log(1.0L - p);
    }
    CHECK(bc_loss(d, a) == doctest::Approx(static_cast<double>(expect)).epsilon(1e-12));
  }
}

TEST_CASE("gradient check against central finite differences") {
  for (Mode mode : {Mode::Infer, Mode::Train}) {
    const NetworkParams base = init_params(NetworkConfig::preset("tiny"), 3);
    std::mt19937_64 rng(21);
    std::vector<Observation> obs;
    std::vector<Action> acts;
    for (int t = 0; t < 3; ++t) {
      obs.push_back(random_observation(rng));
      acts.push_back(random_action(rng));
    }
    const auto grad = backward(base, obs, acts, 0, mode, 77);
    NetworkParams p = base;
    const double eps = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double keep = p.values[i];
      p.values[i] = keep + eps;
      const double up = sequence_loss(p, obs, acts, mode, 77);
      p.values[i] = keep - eps;
      const double down = sequence_loss(p, obs, acts, mode, 77);
      p.values[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      // Central differences at eps = 1e-5 carry ~1e-10 of roundoff, so the
      // denominator is floored at 1e-5.
      const double rel = std::abs(numeric - grad[i]) / std::max({std::abs(numeric), std::abs(grad[i]), 1e-5});
      worst = std::max(worst, rel);
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("truncation is observable; bias gradients on zero input") {
  const NetworkParams p = init_params(NetworkConfig::preset("tiny"), 4);
  std::mt19937_64 rng(2);
  std::vector<Observation> obs;
  std::vector<Action> acts;
  for (int t = 0; t < 4; ++t) {
    obs.push_back(random_observation(rng));
    acts.push_back(random_action(rng));
  }
  double l_full = 0, l_trunc = 0;
  const auto full = backward(p, obs, acts, 0, Mode::Infer, 0, &l_full);
  const auto trunc = backward(p, obs, acts, 2, Mode::Infer, 0, &l_trunc);
  CHECK(l_full == doctest::Approx(l_trunc).epsilon(1e-14));
  CHECK(full != trunc);

  std::vector<Observation> zeros(3);
  for (auto& o : zeros) o.visual.values.fill(0.0);
  std::vector<Action> noop(3);
  const auto g1 = backward(p, zeros, noop, 64, Mode::Infer, 0);
  const auto g2 = backward(p, zeros, noop, 64, Mode::Infer, 0);
  CHECK(g1 == g2);
  for (const auto& t : p.layout) {
    if (t.name != "aim.b" && t.name != "keys.b") continue;
    double s = 0;
    for (int k = 0; k < t.rows; ++k) s += std::abs(g1[t.offset + k]);
    CHECK(s > 0.0);
  }
}

TEST_CASE("stepwise forward equals the rolled sequence; batch columns are independent") {
  const NetworkParams p = init_params(NetworkConfig::preset("tiny"), 6);
  std::mt19937_64 rng(12);
  const int T = 5, B = 3;
  SequenceBatch batch(T, B);
  std::vector<std::vector<Observation>> obs(B);
  std::vector<std::vector<Action>> acts(B);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      obs[b].push_back(random_observation(rng));
      acts[b].push_back(random_action(rng));
      obs[b][t].flatten(std::span<double>(batch.observations[t].col(b).data(), kObservationSize));
      batch.aim[t][b] = acts[b][t].aim.index;
      batch.keys[t][b] = acts[b][t].keys.bits;
      batch.mask[t][b] = 1;
    }
  }
  HiddenState rolled = zero_hidden<double>(p.config, B);
  const LossResult r = loss_and_gradient(p, batch, rolled, Mode::Infer, nullptr, nullptr);

  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    HiddenState h = zero_hidden<double>(p.config);
    for (int t = 0; t < T; ++t) total += bc_loss(forward(p, obs[b][t], h), acts[b][t]);
    CHECK(h.h[0].col(0).isApprox(rolled.h[0].col(b), 1e-13));
    CHECK(h.c[0].col(0).isApprox(rolled.c[0].col(b), 1e-13));
  }
  CHECK(r.loss == doctest::Approx(total / (T * B)).epsilon(1e-12));
  CHECK(r.valid_steps == T * B);
}

TEST_CASE("masked steps contribute nothing") {
  const NetworkParams p = init_params(NetworkConfig::preset("tiny"), 6);
  SequenceBatch a(3, 1);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 3; ++t) {
    random_observation(rng).flatten(std::span<double>(a.observations[t].data(), kObservationSize));
    a.aim[t][0] = t * 10;
    a.mask[t][0] = t < 2;
  }
  SequenceBatch b = a;
  b.aim[2][0] = 99;
  b.keys[2][0] = 0x7ff;
  std::vector<double> ga, gb;
  HiddenState ha = zero_hidden<double>(p.config), hb = zero_hidden<double>(p.config);
  const auto ra = loss_and_gradient(p, a, ha, Mode::Infer, nullptr, &ga);
  const auto rb = loss_and_gradient(p, b, hb, Mode::Infer, nullptr, &gb);
  CHECK(ra.loss == rb.loss);
  CHECK(ga == gb);
}

TEST_CASE("single precision inference tracks double precision") {
  const NetworkParams p = init_params(NetworkConfig::preset("A"), 7);
  const auto pf = to_float(p);
  std::mt19937_64 rng(1);
  const Observation o = random_observation(rng);
  Mat<double> od(kObservationSize, 1);
  o.flatten(std::span<double>(od.data(), kObservationSize));
  Mat<float> of = od.cast<float>();
  auto hd = zero_hidden<double>(p.config);
  auto hf = zero_hidden<float>(p.config);
  Mat<double> ad, kd;
  Mat<float> af, kf;
  forward_step(p, od, hd, Mode::Infer, nullptr, ad, kd);
  forward_step(pf, of, hf, Mode::Infer, nullptr, af, kf);
  CHECK((ad.cast<float>() - af).cwiseAbs().maxCoeff() < 1e-4f);
}

TEST_CASE("forward rejects mismatched shapes") {
  const NetworkParams p = init_params(NetworkConfig::preset("tiny"), 7);
  Mat<double> wrong = Mat<double>::Zero(100, 1), aim, keys;
  auto h = zero_hidden<double>(p.config);
  CHECK_THROWS_AS(forward_step(p, wrong, h, Mode::Infer, nullptr, aim, keys), std::invalid_argument);
  Mat<double> ok = Mat<double>::Zero(kObservationSize, 2);
  CHECK_THROWS_AS(forward_step(p, ok, h, Mode::Infer, nullptr, aim, keys), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bit exact; corruption is detected") {
  const auto dir = temp_dir("ckpt");
  Checkpoint ck;
  ck.params = init_params(NetworkConfig::preset("tiny"), 11);
  ck.epoch = 7;
  ck.optimizer.step = 123;
  ck.optimizer.m.assign(ck.params.values.size(), 0.25);
  ck.optimizer.v.assign(ck.params.values.size(), 1e-300);
  ck.metadata = {{"note", "x"}};
  const auto path = dir / "model.ckpt";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.params.values == ck.params.values);
  CHECK(back.params.config == ck.params.config);
  CHECK(back.params.seed == 11);
  CHECK(back.epoch == 7);
  CHECK(back.optimizer.step == 123);
  CHECK(back.optimizer.v == ck.optimizer.v);
  CHECK(back.metadata == ck.metadata);

  // Flip one byte in the middle.
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  bytes[bytes.size() / 2] ^= 0x40;
  const auto bad = dir / "bad.ckpt";
  {
    std::ofstream out(bad, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
  bytes.resize(10);
  {
    std::ofstream out(bad, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config JSON round-trip and unknown-key rejection") {
  const NetworkConfig c = NetworkConfig::preset("E");
  nlohmann::json j = c;
  CHECK(j.get<NetworkConfig>() == c);
  CHECK(nlohmann::json{{"preset", "B"}}.get<NetworkConfig>() == NetworkConfig::preset("B"));
  CHECK_THROWS_AS((nlohmann::json{{"filters", 3}}.get<NetworkConfig>()), std::invalid_argument);
  CHECK_THROWS_AS((nlohmann::json{{"preset", "A"}, {"lstm_widths", std::vector<int>{0}}}.get<NetworkConfig>()),
                  std::invalid_argument);
}
