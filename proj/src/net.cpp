#include "tacbot/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tacbot {

namespace {

constexpr int kPatch = 3 * 3 * kVisualLayers;  // 90
constexpr int kPixels = kGrid * kGrid;         // 225

template <typename T>
using MapMat = Eigen::Map<const Mat<T>>;
using MapMatMut = Eigen::Map<Mat<double>>;

template <typename T>
MapMat<T> view(const NetworkParamsT<T>& p, std::size_t i) {
  const TensorSpec& s = p.layout[i];
  return MapMat<T>(p.values.data() + s.offset, s.rows, s.cols);
}

MapMatMut view(std::vector<double>& g, const TensorSpec& s) {
  return MapMatMut(g.data() + s.offset, s.rows, s.cols);
}

template <typename T>
T sigmoid(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

// Writes the zero-padded 3x3 neighbourhoods of every pixel of every batch
// column: out is 90 x (225 * batch), column b * 225 + pixel.
template <typename Derived, typename T>
void im2col(const Eigen::MatrixBase<Derived>& obs, Mat<T>& out) {
  const int batch = static_cast<int>(obs.cols());
  out.setZero(kPatch, kPixels * batch);
  for (int b = 0; b < batch; ++b) {
    for (int r = 0; r < kGrid; ++r) {
      for (int c = 0; c < kGrid; ++c) {
        T* col = out.data() + static_cast<std::ptrdiff_t>(b * kPixels + r * kGrid + c) * kPatch;
        for (int dr = -1; dr <= 1; ++dr) {
          const int rr = r + dr;
          if (rr < 0 || rr >= kGrid) continue;
          for (int dc = -1; dc <= 1; ++dc) {
            const int cc = c + dc;
            if (cc < 0 || cc >= kGrid) continue;
            const int k = ((dr + 1) * 3 + (dc + 1)) * kVisualLayers;
            const int src = (rr * kGrid + cc) * kVisualLayers;
            for (int l = 0; l < kVisualLayers; ++l) col[k + l] = obs(src + l, b);
          }
        }
      }
    }
  }
}

// Indices into the layout for each logical layer.
struct LayerIndex {
  std::size_t conv = 0, scalar = 2, audio = 4, spatial = 6;
  std::vector<std::size_t> pre, lstm, post;
  std::size_t aim = 0, key = 0;

  explicit LayerIndex(const NetworkConfig& c) {
    std::size_t i = 8;
    for (std::size_t k = 0; k < c.pre_lstm_dense.size(); ++k, i += 2) pre.push_back(i);
    for (std::size_t k = 0; k < c.lstm_widths.size(); ++k, i += 2) lstm.push_back(i);
    for (std::size_t k = 0; k < c.post_lstm_dense.size(); ++k, i += 2) post.push_back(i);
    aim = i;
    key = i + 2;
  }
};

void dropout_mask(Mat<double>& mask, int rows, int cols, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  mask.resize(rows, cols);
  const double scale = 1.0 / (1.0 - p);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) mask(i, j) = keep(rng) ? scale : 0.0;
}

template <typename T>
void dropout_mask(Mat<T>& mask, int rows, int cols, double p, std::mt19937_64& rng) {
  Mat<double> m;
  dropout_mask(m, rows, cols, p, rng);
  mask = m.cast<T>();
}

}  // namespace

// --- Config -----------------------------------------------------------------

NetworkConfig NetworkConfig::preset(const std::string& name) {
  NetworkConfig c;
  c.name = name;
  if (name == "A") {
    c.conv_filters = 8;
    c.pre_lstm_dense = {256};
    c.lstm_widths = {128};
    c.post_lstm_dense = {64};
  } else if (name == "B") {
    c.conv_filters = 16;
    c.pre_lstm_dense = {512};
    c.lstm_widths = {256};
    c.post_lstm_dense = {128};
  } else if (name == "C") {
    c.conv_filters = 16;
    c.pre_lstm_dense = {512};
    c.lstm_widths = {768};
    c.post_lstm_dense = {256};
  } else if (name == "D") {
    c.conv_filters = 32;
    c.pre_lstm_dense = {1024};
    c.lstm_widths = {1024};
    c.post_lstm_dense = {512, 256};
  } else if (name == "E") {
    c.conv_filters = 32;
    c.pre_lstm_dense = {1024, 1024};
    c.lstm_widths = {1024, 1024};
    c.post_lstm_dense = {1024, 512, 256};
  } else if (name == "F") {
    c.conv_filters = 48;
    c.pre_lstm_dense = {1792, 1024, 1024};
    c.lstm_widths = {1024, 1024};
    c.post_lstm_dense = {1024, 512, 256};
  } else if (name == "A-small") {
    c.conv_filters = 4;
    c.pre_lstm_dense = {64};
    c.lstm_widths = {32};
    c.post_lstm_dense = {32};
  } else if (name == "tiny") {
    c.conv_filters = 2;
    c.pre_lstm_dense = {8};
    c.lstm_widths = {4};
    c.post_lstm_dense = {4};
  } else {
    throw std::invalid_argument("unknown network preset '" + name + "'");
  }
  c.encoder_width = 4 * c.conv_filters;
  return c;
}

std::vector<std::string> NetworkConfig::preset_names() {
  return {"A", "B", "C", "D", "E", "F", "A-small", "tiny"};
}

void NetworkConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string("network config: ") + what + " must be >= 1");
  };
  positive(conv_filters, "conv_filters");
  positive(encoder_width, "encoder_width");
  for (int w : pre_lstm_dense) positive(w, "pre_lstm_dense width");
  for (int w : post_lstm_dense) positive(w, "post_lstm_dense width");
  for (int w : lstm_widths) positive(w, "lstm width");
  if (lstm_widths.empty()) throw std::invalid_argument("network config: need at least one LSTM layer");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("network config: dropout must be in [0, 1)");
}

int NetworkConfig::concat_width() const {
  return kPixels * conv_filters + 3 * encoder_width;
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"name", c.name},
       {"conv_filters", c.conv_filters},
       {"encoder_width", c.encoder_width},
       {"pre_lstm_dense", c.pre_lstm_dense},
       {"lstm_widths", c.lstm_widths},
       {"post_lstm_dense", c.post_lstm_dense},
       {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  static const char* keys[] = {"name",        "conv_filters",    "encoder_width", "pre_lstm_dense",
                               "lstm_widths", "post_lstm_dense", "dropout",       "preset"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(keys), std::end(keys), [&](const char* k) { return it.key() == k; }) ==
        std::end(keys))
      throw std::invalid_argument("network config: unknown key '" + it.key() + "'");
  }
  c = j.contains("preset") ? NetworkConfig::preset(j.at("preset").get<std::string>()) : NetworkConfig{};
  if (j.contains("name")) c.name = j.at("name").get<std::string>();
  if (j.contains("conv_filters")) c.conv_filters = j.at("conv_filters").get<int>();
  if (j.contains("encoder_width")) c.encoder_width = j.at("encoder_width").get<int>();
  if (j.contains("pre_lstm_dense")) c.pre_lstm_dense = j.at("pre_lstm_dense").get<std::vector<int>>();
  if (j.contains("lstm_widths")) c.lstm_widths = j.at("lstm_widths").get<std::vector<int>>();
  if (j.contains("post_lstm_dense")) c.post_lstm_dense = j.at("post_lstm_dense").get<std::vector<int>>();
  if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
  c.validate();
}

std::vector<TensorSpec> param_layout(const NetworkConfig& c) {
  c.validate();
  std::vector<TensorSpec> out;
  std::int64_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    out.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::int64_t>(rows) * cols;
  };
  auto dense = [&](const std::string& name, int out_w, int in_w) {
    add(name + ".W", out_w, in_w);
    add(name + ".b", out_w, 1);
  };
  dense("conv", c.conv_filters, kPatch);
  dense("enc_scalar", c.encoder_width, kScalarDim);
  dense("enc_audio", c.encoder_width, kAudioSize);
  dense("enc_spatial", c.encoder_width, kSpatialDim);
  int width = c.concat_width();
  for (std::size_t i = 0; i < c.pre_lstm_dense.size(); ++i) {
    dense("pre" + std::to_string(i), c.pre_lstm_dense[i], width);
    width = c.pre_lstm_dense[i];
  }
  for (std::size_t i = 0; i < c.lstm_widths.size(); ++i) {
    const int h = c.lstm_widths[i];
    dense("lstm" + std::to_string(i), 4 * h, width + h);
    width = h;
  }
  for (std::size_t i = 0; i < c.post_lstm_dense.size(); ++i) {
    dense("post" + std::to_string(i), c.post_lstm_dense[i], width);
    width = c.post_lstm_dense[i];
  }
  dense("aim", kNumAimActions, width);
  dense("keys", kNumKeys, width);
  return out;
}

std::int64_t count_params(const NetworkConfig& c) {
  const auto layout = param_layout(c);
  return layout.back().offset + layout.back().size();
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParams p;
  p.config = config;
  p.seed = seed;
  p.layout = param_layout(config);
  p.values.assign(static_cast<std::size_t>(count_params(config)), 0.0);
  std::mt19937_64 rng(seed);
  const LayerIndex idx(config);
  for (std::size_t i = 0; i < p.layout.size(); i += 2) {
    const TensorSpec& w = p.layout[i];
    int fan_in = w.cols, fan_out = w.rows;
    if (i == idx.conv) fan_out = w.rows * 9;  // each filter covers a 3x3 window
    if (std::find(idx.lstm.begin(), idx.lstm.end(), i) != idx.lstm.end()) fan_out = w.rows / 4;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::int64_t k = 0; k < w.size(); ++k) p.values[w.offset + k] = u(rng);
  }
  for (std::size_t l : idx.lstm) {
    const TensorSpec& b = p.layout[l + 1];
    const int h = b.rows / 4;
    for (int k = h; k < 2 * h; ++k) p.values[b.offset + k] = 1.0;
  }
  return p;
}

NetworkParamsT<float> to_float(const NetworkParams& params) {
  NetworkParamsT<float> f;
  f.config = params.config;
  f.seed = params.seed;
  f.layout = params.layout;
  f.values.assign(params.values.begin(), params.values.end());
  return f;
}

template <typename T>
HiddenStateT<T> zero_hidden(const NetworkConfig& config, int batch) {
  HiddenStateT<T> s;
  for (int w : config.lstm_widths) {
    s.h.push_back(Mat<T>::Zero(w, batch));
    s.c.push_back(Mat<T>::Zero(w, batch));
  }
  return s;
}
template HiddenStateT<double> zero_hidden<double>(const NetworkConfig&, int);
template HiddenStateT<float> zero_hidden<float>(const NetworkConfig&, int);

// --- Forward ------------------------------------------------------------------

template <typename T>
void forward_step(const NetworkParamsT<T>& p, const Mat<T>& obs, HiddenStateT<T>& hidden, Mode mode,
                  std::mt19937_64* rng, Mat<T>& aim_logits, Mat<T>& key_logits,
                  ForwardScratch<T>* scratch) {
  const NetworkConfig& c = p.config;
  if (obs.rows() != kObservationSize)
    throw std::invalid_argument("forward: observation has " + std::to_string(obs.rows()) +
                                " rows, expected " + std::to_string(kObservationSize));
  const int B = static_cast<int>(obs.cols());
  if (hidden.h.size() != c.lstm_widths.size() || hidden.batch() != B)
    throw std::invalid_argument("forward: hidden state does not match config/batch");
  if (mode == Mode::Train && c.dropout > 0.0 && rng == nullptr)
    throw std::invalid_argument("forward: train mode needs a dropout rng");
  ForwardScratch<T> local;
  ForwardScratch<T>& s = scratch ? *scratch : local;
  const LayerIndex idx(c);
  const int F = c.conv_filters;
  const int E = c.encoder_width;

  im2col(obs.topRows(kVisualSize), s.patches);
  s.conv.noalias() = view(p, idx.conv) * s.patches;
  s.conv.colwise() += view(p, idx.conv + 1).col(0);
  s.conv = s.conv.cwiseMax(T(0));

  const int visual = kPixels * F;
  s.concat.resize(c.concat_width(), B);
  s.concat.topRows(visual) = Eigen::Map<const Mat<T>>(s.conv.data(), visual, B);
  s.concat.middleRows(visual, E).noalias() =
      view(p, idx.scalar) * obs.middleRows(kVisualSize + kAudioSize, kScalarDim);
  s.concat.middleRows(visual, E).colwise() += view(p, idx.scalar + 1).col(0);
  s.concat.middleRows(visual + E, E).noalias() = view(p, idx.audio) * obs.middleRows(kVisualSize, kAudioSize);
  s.concat.middleRows(visual + E, E).colwise() += view(p, idx.audio + 1).col(0);
  s.concat.bottomRows(E).noalias() =
      view(p, idx.spatial) * obs.bottomRows(kSpatialDim);
  s.concat.bottomRows(E).colwise() += view(p, idx.spatial + 1).col(0);

  s.acts.resize(1);
  s.acts[0] = s.concat;
  for (std::size_t l : idx.pre) {
    Mat<T> next = view(p, l) * s.acts.back();
    next.colwise() += view(p, l + 1).col(0);
    s.acts.push_back(next.cwiseMax(T(0)));
  }
  Mat<T> x = s.acts.back();
  for (std::size_t k = 0; k < idx.lstm.size(); ++k) {
    const int H = c.lstm_widths[k];
    s.lstm_in.resize(x.rows() + H, B);
    s.lstm_in.topRows(x.rows()) = x;
    s.lstm_in.bottomRows(H) = hidden.h[k];
    Mat<T> z = view(p, idx.lstm[k]) * s.lstm_in;
    z.colwise() += view(p, idx.lstm[k] + 1).col(0);
    for (int j = 0; j < B; ++j) {
      for (int i = 0; i < H; ++i) {
        const T ig = sigmoid(z(i, j));
        const T fg = sigmoid(z(H + i, j));
        const T gg = std::tanh(z(2 * H + i, j));
        const T og = sigmoid(z(3 * H + i, j));
        const T cn = fg * hidden.c[k](i, j) + ig * gg;
        hidden.c[k](i, j) = cn;
        hidden.h[k](i, j) = og * std::tanh(cn);
      }
    }
    x = hidden.h[k];
    if (mode == Mode::Train && c.dropout > 0.0) {
      Mat<T> mask;
      dropout_mask(mask, H, B, c.dropout, *rng);
      x = x.cwiseProduct(mask);
    }
  }
  for (std::size_t l : idx.post) {
    Mat<T> next = view(p, l) * x;
    next.colwise() += view(p, l + 1).col(0);
    x = next.cwiseMax(T(0));
  }
  aim_logits.noalias() = view(p, idx.aim) * x;
  aim_logits.colwise() += view(p, idx.aim + 1).col(0);
  key_logits.noalias() = view(p, idx.key) * x;
  key_logits.colwise() += view(p, idx.key + 1).col(0);
}

template void forward_step<double>(const NetworkParamsT<double>&, const Mat<double>&,
                                   HiddenStateT<double>&, Mode, std::mt19937_64*, Mat<double>&,
                                   Mat<double>&, ForwardScratch<double>*);
template void forward_step<float>(const NetworkParamsT<float>&, const Mat<float>&,
                                  HiddenStateT<float>&, Mode, std::mt19937_64*, Mat<float>&,
                                  Mat<float>&, ForwardScratch<float>*);

std::array<double, kNumAimActions> ActionDistribution::aim_probs() const {
  std::array<double, kNumAimActions> p{};
  const double m = *std::max_element(aim_logits.begin(), aim_logits.end());
  double z = 0.0;
  for (int i = 0; i < kNumAimActions; ++i) z += (p[i] = std::exp(aim_logits[i] - m));
  for (double& v : p) v /= z;
  return p;
}

std::array<double, kNumKeys> ActionDistribution::key_probs() const {
  std::array<double, kNumKeys> p{};
  for (int i = 0; i < kNumKeys; ++i) p[i] = sigmoid(key_logits[i]);
  return p;
}

ActionDistribution forward(const NetworkParams& params, const Observation& observation,
                           HiddenState& hidden, Mode mode, std::mt19937_64* rng) {
  Mat<double> obs(kObservationSize, 1);
  observation.flatten(std::span<double>(obs.data(), kObservationSize));
  Mat<double> aim, keys;
  forward_step(params, obs, hidden, mode, rng, aim, keys);
  ActionDistribution d;
  for (int i = 0; i < kNumAimActions; ++i) d.aim_logits[i] = aim(i, 0);
  for (int i = 0; i < kNumKeys; ++i) d.key_logits[i] = keys(i, 0);
  return d;
}

namespace {

double log_sum_exp(const double* x, int n) {
  const double m = *std::max_element(x, x + n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

// -log sigmoid(z) for label 1, -log(1 - sigmoid(z)) for label 0.
double bce_logit(double z, bool label) {
  const double a = label ? -z : z;
  return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a)));
}

}  // namespace

double bc_loss(const ActionDistribution& d, const Action& target) {
  double loss = log_sum_exp(d.aim_logits.data(), kNumAimActions) - d.aim_logits.at(target.aim.index);
  for (int k = 0; k < kNumKeys; ++k)
    loss += bce_logit(d.key_logits[k], target.keys.pressed(static_cast<Key>(k)));
  return loss;
}

// --- Training pass ------------------------------------------------------------

SequenceBatch::SequenceBatch(int T, int B)
    : length(T),
      batch(B),
      observations(T, Mat<double>::Zero(kObservationSize, B)),
      aim(T, std::vector<int>(B, kNoOpAimIndex)),
      keys(T, std::vector<std::uint16_t>(B, 0)),
      mask(T, std::vector<std::uint8_t>(B, 0)) {}

int SequenceBatch::valid_steps() const {
  int n = 0;
  for (const auto& row : mask)
    for (auto m : row) n += m != 0;
  return n;
}

namespace {

struct LstmCache {
  Mat<double> input;  // [x; h_prev]
  Mat<double> c_prev, i, f, g, o, c, tanh_c, mask;
};

struct StepCache {
  Mat<double> conv;                 // post-ReLU, F x 225B
  std::vector<Mat<double>> acts;    // concat then each pre-dense output
  std::vector<LstmCache> lstm;
  std::vector<Mat<double>> post_in; // input to each post layer, then head input last
  Mat<double> aim_logits, key_logits;
};

}  // namespace

LossResult loss_and_gradient(const NetworkParams& p, const SequenceBatch& batch, HiddenState& hidden,
                             Mode mode, std::mt19937_64* rng, std::vector<double>* grad) {
  const NetworkConfig& c = p.config;
  const LayerIndex idx(c);
  const int T = batch.length, B = batch.batch;
  const int F = c.conv_filters, E = c.encoder_width;
  const int visual = kPixels * F;
  const bool dropout = mode == Mode::Train && c.dropout > 0.0;
  if (dropout && rng == nullptr) throw std::invalid_argument("loss_and_gradient: dropout needs an rng");
  if (hidden.batch() != B) throw std::invalid_argument("loss_and_gradient: hidden batch mismatch");
  if ((!batch.aim_weight.empty() && batch.aim_weight.size() != kNumAimActions) ||
      (!batch.key_pos_weight.empty() && batch.key_pos_weight.size() != kNumKeys))
    throw std::invalid_argument("loss_and_gradient: class weight vectors have the wrong size");

  LossResult result;
  result.valid_steps = batch.valid_steps();
  const double weight = result.valid_steps > 0 ? 1.0 / result.valid_steps : 0.0;
  std::vector<StepCache> caches(static_cast<std::size_t>(T));
  std::vector<Mat<double>> daim(T), dkey(T);
  Mat<double> patches;

  for (int t = 0; t < T; ++t) {
    StepCache& sc = caches[t];
    const Mat<double>& obs = batch.observations[t];
    im2col(obs.topRows(kVisualSize), patches);
    sc.conv = view(p, idx.conv) * patches;
    sc.conv.colwise() += view(p, idx.conv + 1).col(0);
    sc.conv = sc.conv.cwiseMax(0.0);

    Mat<double> concat(c.concat_width(), B);
    concat.topRows(visual) = Eigen::Map<const Mat<double>>(sc.conv.data(), visual, B);
    concat.middleRows(visual, E) = view(p, idx.scalar) * obs.middleRows(kVisualSize + kAudioSize, kScalarDim);
    concat.middleRows(visual, E).colwise() += view(p, idx.scalar + 1).col(0);
    concat.middleRows(visual + E, E) = view(p, idx.audio) * obs.middleRows(kVisualSize, kAudioSize);
    concat.middleRows(visual + E, E).colwise() += view(p, idx.audio + 1).col(0);
    concat.bottomRows(E) = view(p, idx.spatial) * obs.bottomRows(kSpatialDim);
    concat.bottomRows(E).colwise() += view(p, idx.spatial + 1).col(0);
    sc.acts.push_back(std::move(concat));
    for (std::size_t l : idx.pre) {
      Mat<double> next = view(p, l) * sc.acts.back();
      next.colwise() += view(p, l + 1).col(0);
      sc.acts.push_back(next.cwiseMax(0.0));
    }

    Mat<double> x = sc.acts.back();
    for (std::size_t k = 0; k < idx.lstm.size(); ++k) {
      const int H = c.lstm_widths[k];
      LstmCache lc;
      lc.input.resize(x.rows() + H, B);
      lc.input.topRows(x.rows()) = x;
      lc.input.bottomRows(H) = hidden.h[k];
      lc.c_prev = hidden.c[k];
      Mat<double> z = view(p, idx.lstm[k]) * lc.input;
      z.colwise() += view(p, idx.lstm[k] + 1).col(0);
      lc.i = z.topRows(H).unaryExpr([](double v) { return sigmoid(v); });
      lc.f = z.middleRows(H, H).unaryExpr([](double v) { return sigmoid(v); });
      lc.g = z.middleRows(2 * H, H).array().tanh().matrix();
      lc.o = z.bottomRows(H).unaryExpr([](double v) { return sigmoid(v); });
      lc.c = lc.f.cwiseProduct(lc.c_prev) + lc.i.cwiseProduct(lc.g);
      lc.tanh_c = lc.c.array().tanh().matrix();
      hidden.c[k] = lc.c;
      hidden.h[k] = lc.o.cwiseProduct(lc.tanh_c);
      x = hidden.h[k];
      if (dropout) {
        dropout_mask(lc.mask, H, B, c.dropout, *rng);
        x = x.cwiseProduct(lc.mask);
      }
      sc.lstm.push_back(std::move(lc));
    }
    for (std::size_t l : idx.post) {
      sc.post_in.push_back(x);
      Mat<double> next = view(p, l) * x;
      next.colwise() += view(p, l + 1).col(0);
      x = next.cwiseMax(0.0);
    }
    sc.post_in.push_back(x);
    sc.aim_logits = view(p, idx.aim) * x;
    sc.aim_logits.colwise() += view(p, idx.aim + 1).col(0);
    sc.key_logits = view(p, idx.key) * x;
    sc.key_logits.colwise() += view(p, idx.key + 1).col(0);

    // Loss and output gradients.
    daim[t] = Mat<double>::Zero(kNumAimActions, B);
    dkey[t] = Mat<double>::Zero(kNumKeys, B);
    for (int b = 0; b < B; ++b) {
      if (!batch.mask[t][b]) continue;
      const double* logits = sc.aim_logits.col(b).data();
      const double lse = log_sum_exp(logits, kNumAimActions);
      const int target = batch.aim[t][b];
      if (target < 0 || target >= kNumAimActions)
        throw std::out_of_range("loss_and_gradient: aim target out of range");
      const double wa = batch.aim_weight.empty() ? 1.0 : batch.aim_weight[target];
      result.loss += wa * (lse - logits[target]);
      int argmax = 0;
      for (int a = 0; a < kNumAimActions; ++a) {
        daim[t](a, b) = wa * weight * std::exp(logits[a] - lse);
        if (logits[a] > logits[argmax]) argmax = a;
      }
      daim[t](target, b) -= wa * weight;
      result.aim_correct += argmax == target;
      for (int k = 0; k < kNumKeys; ++k) {
        const bool label = (batch.keys[t][b] >> k) & 1U;
        const double wk = label && !batch.key_pos_weight.empty() ? batch.key_pos_weight[k] : 1.0;
        const double z = sc.key_logits(k, b);
        result.loss += wk * bce_logit(z, label);
        dkey[t](k, b) = wk * weight * (sigmoid(z) - (label ? 1.0 : 0.0));
        result.key_correct[k] += (z > 0.0) == label;
      }
    }
  }
  result.loss *= weight;
  if (grad == nullptr) return result;

  grad->assign(p.values.size(), 0.0);
  std::vector<double>& g = *grad;
  const std::size_t L = idx.lstm.size();
  std::vector<Mat<double>> dh_next(L), dc_next(L);
  for (std::size_t k = 0; k < L; ++k) {
    dh_next[k] = Mat<double>::Zero(c.lstm_widths[k], B);
    dc_next[k] = Mat<double>::Zero(c.lstm_widths[k], B);
  }

  for (int t = T - 1; t >= 0; --t) {
    StepCache& sc = caches[t];
    const Mat<double>& head_in = sc.post_in.back();
    view(g, p.layout[idx.aim]).noalias() += daim[t] * head_in.transpose();
    view(g, p.layout[idx.aim + 1]).col(0) += daim[t].rowwise().sum();
    view(g, p.layout[idx.key]).noalias() += dkey[t] * head_in.transpose();
    view(g, p.layout[idx.key + 1]).col(0) += dkey[t].rowwise().sum();
    Mat<double> dx = view(p, idx.aim).transpose() * daim[t] + view(p, idx.key).transpose() * dkey[t];

    for (std::size_t n = idx.post.size(); n-- > 0;) {
      const std::size_t l = idx.post[n];
      const Mat<double>& out = sc.post_in[n + 1];
      Mat<double> dz = dx.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
      view(g, p.layout[l]).noalias() += dz * sc.post_in[n].transpose();
      view(g, p.layout[l + 1]).col(0) += dz.rowwise().sum();
      dx = view(p, l).transpose() * dz;
    }

    for (std::size_t k = L; k-- > 0;) {
      const int H = c.lstm_widths[k];
      const LstmCache& lc = sc.lstm[k];
      if (dropout) dx = dx.cwiseProduct(lc.mask);
      Mat<double> dh = dx + dh_next[k];
      Mat<double> dc = dh.cwiseProduct(lc.o).cwiseProduct(
                           (1.0 - lc.tanh_c.array().square()).matrix()) +
                       dc_next[k];
      Mat<double> dz(4 * H, B);
      dz.topRows(H) = dc.cwiseProduct(lc.g).cwiseProduct((lc.i.array() * (1.0 - lc.i.array())).matrix());
      dz.middleRows(H, H) =
          dc.cwiseProduct(lc.c_prev).cwiseProduct((lc.f.array() * (1.0 - lc.f.array())).matrix());
      dz.middleRows(2 * H, H) = dc.cwiseProduct(lc.i).cwiseProduct((1.0 - lc.g.array().square()).matrix());
      dz.bottomRows(H) =
          dh.cwiseProduct(lc.tanh_c).cwiseProduct((lc.o.array() * (1.0 - lc.o.array())).matrix());
      view(g, p.layout[idx.lstm[k]]).noalias() += dz * lc.input.transpose();
      view(g, p.layout[idx.lstm[k] + 1]).col(0) += dz.rowwise().sum();
      Mat<double> dinput = view(p, idx.lstm[k]).transpose() * dz;
      const int in_rows = static_cast<int>(lc.input.rows()) - H;
      dh_next[k] = dinput.bottomRows(H);
      dc_next[k] = dc.cwiseProduct(lc.f);
      dx = dinput.topRows(in_rows);
    }

    for (std::size_t n = idx.pre.size(); n-- > 0;) {
      const std::size_t l = idx.pre[n];
      const Mat<double>& out = sc.acts[n + 1];
      Mat<double> dz = dx.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
      view(g, p.layout[l]).noalias() += dz * sc.acts[n].transpose();
      view(g, p.layout[l + 1]).col(0) += dz.rowwise().sum();
      dx = view(p, l).transpose() * dz;
    }

    // dx is now d(concat).
    const Mat<double>& obs = batch.observations[t];
    auto enc = [&](std::size_t l, int row, int in_row, int in_dim) {
      const Mat<double> d = dx.middleRows(row, E);
      view(g, p.layout[l]).noalias() += d * obs.middleRows(in_row, in_dim).transpose();
      view(g, p.layout[l + 1]).col(0) += d.rowwise().sum();
    };
    enc(idx.scalar, visual, kVisualSize + kAudioSize, kScalarDim);
    enc(idx.audio, visual + E, kVisualSize, kAudioSize);
    enc(idx.spatial, visual + 2 * E, kVisualSize + kAudioSize + kScalarDim, kSpatialDim);

    Mat<double> dconv(F, kPixels * B);
    Eigen::Map<Mat<double>>(dconv.data(), visual, B) = dx.topRows(visual);
    dconv = dconv.cwiseProduct((sc.conv.array() > 0.0).cast<double>().matrix());
    im2col(obs.topRows(kVisualSize), patches);
    view(g, p.layout[idx.conv]).noalias() += dconv * patches.transpose();
    view(g, p.layout[idx.conv + 1]).col(0) += dconv.rowwise().sum();
  }
  return result;
}

std::vector<double> backward(const NetworkParams& params, const std::vector<Observation>& observations,
                             const std::vector<Action>& targets, int window, Mode mode,
                             std::uint64_t dropout_seed, double* mean_loss) {
  if (observations.empty() || observations.size() != targets.size())
    throw std::invalid_argument("backward: need matching, non-empty observations and targets");
  const int n = static_cast<int>(observations.size());
  if (window <= 0) window = n;
  std::mt19937_64 rng(dropout_seed);
  HiddenState hidden = zero_hidden<double>(params.config, 1);
  std::vector<double> total(params.values.size(), 0.0), part;
  double loss = 0.0;
  for (int start = 0; start < n; start += window) {
    const int len = std::min(window, n - start);
    SequenceBatch b(len, 1);
    for (int t = 0; t < len; ++t) {
      observations[start + t].flatten(std::span<double>(b.observations[t].data(), kObservationSize));
      b.aim[t][0] = targets[start + t].aim.index;
      b.keys[t][0] = targets[start + t].keys.bits;
      b.mask[t][0] = 1;
    }
    const LossResult r = loss_and_gradient(params, b, hidden, mode, &rng, &part);
    const double share = static_cast<double>(len) / n;
    loss += r.loss * share;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += part[i] * share;
  }
  if (mean_loss) *mean_loss = loss;
  return total;
}

// --- Checkpoints ----------------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'B', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  template <typename V>
  void put(const V& v) {
    raw(&v, sizeof(V));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void string(const std::string& s) {
    put<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  std::vector<char> buf;
};

class Reader {
 public:
  Reader(const std::vector<char>& b, std::size_t end) : buf(b), limit(end) {}
  template <typename V>
  V get() {
    V v;
    raw(&v, sizeof(V));
    return v;
  }
  void raw(void* p, std::size_t n) {
    if (pos + n > limit) throw CheckpointError("checkpoint truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::vector<double> doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (limit - pos) / sizeof(double)) throw CheckpointError("checkpoint truncated");
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  std::string string() {
    const auto n = get<std::uint64_t>();
    if (n > limit - pos) throw CheckpointError("checkpoint truncated");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  const std::vector<char>& buf;
  std::size_t limit;
  std::size_t pos = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  nlohmann::json config = ckpt.params.config;
  w.string(config.dump());
  w.string(ckpt.metadata.dump());
  w.put<std::uint64_t>(ckpt.params.seed);
  w.put<std::int32_t>(ckpt.epoch);
  w.put<std::int64_t>(ckpt.optimizer.step);
  w.doubles(ckpt.optimizer.m);
  w.doubles(ckpt.optimizer.v);
  w.doubles(ckpt.params.values);
  const std::uint64_t sum = fnv1a64(w.buf.data(), w.buf.size());
  w.put(sum);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t))
    throw CheckpointError("checkpoint " + path.string() + " is too short");
  if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError("checkpoint " + path.string() + " has a bad magic number");
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (fnv1a64(buf.data(), body) != stored)
    throw CheckpointError("checkpoint " + path.string() + " failed its checksum");

  Reader r(buf, body);
  char magic[4];
  r.raw(magic, 4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  try {
    ck.params.config = nlohmann::json::parse(r.string()).get<NetworkConfig>();
    ck.metadata = nlohmann::json::parse(r.string());
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  ck.params.seed = r.get<std::uint64_t>();
  ck.epoch = r.get<std::int32_t>();
  ck.optimizer.step = r.get<std::int64_t>();
  ck.optimizer.m = r.doubles();
  ck.optimizer.v = r.doubles();
  ck.params.values = r.doubles();
  ck.params.layout = param_layout(ck.params.config);
  if (static_cast<std::int64_t>(ck.params.values.size()) != count_params(ck.params.config))
    throw CheckpointError("checkpoint parameter count does not match its config");
  return ck;
}

}  // namespace tacbot
