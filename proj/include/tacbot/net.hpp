#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tacbot/actions.hpp"
#include "tacbot/sensors.hpp"

namespace tacbot {

/// Layer layout of one model. Encoders for the scalar, audio and spatial
/// streams are linear layers of width `encoder_width`; the flattened conv
/// output feeds the concatenation directly.
struct NetworkConfig {
  std::string name = "custom";
  int conv_filters = 8;
  int encoder_width = 32;
  std::vector<int> pre_lstm_dense = {256};
  std::vector<int> lstm_widths = {128};
  std::vector<int> post_lstm_dense = {64};
  double dropout = 0.5;

  /// Presets "A".."F" plus the scaled-down "A-small" and "tiny".
  static NetworkConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();

  /// Throws std::invalid_argument on a non-positive width or bad dropout.
  void validate() const;

  int concat_width() const;
  bool operator==(const NetworkConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

std::int64_t count_params(const NetworkConfig& config);

/// One weight or bias tensor inside the flat parameter vector. Matrices
/// are column-major (rows = outputs).
struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::int64_t offset = 0;
  std::int64_t size() const { return static_cast<std::int64_t>(rows) * cols; }
};

/// Tensor order: conv W (F x 90), conv b, scalar/audio/spatial encoder W and
/// b, each pre-LSTM dense W and b, each LSTM W (4H x (in + H), gate blocks
/// i, f, g, o) and b, each post-LSTM dense W and b, aim head W and b, key
/// head W and b.
std::vector<TensorSpec> param_layout(const NetworkConfig& config);

template <typename T>
struct NetworkParamsT {
  NetworkConfig config;
  std::uint64_t seed = 0;
  std::vector<TensorSpec> layout;
  std::vector<T> values;

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
  const TensorSpec& tensor(std::size_t i) const { return layout.at(i); }
};
using NetworkParams = NetworkParamsT<double>;

/// Glorot-uniform weights, zero biases, LSTM forget-gate bias +1.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

NetworkParamsT<float> to_float(const NetworkParams& params);

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-LSTM-layer (h, c), each width x batch.
template <typename T>
struct HiddenStateT {
  std::vector<Mat<T>> h;
  std::vector<Mat<T>> c;
  int batch() const { return h.empty() ? 0 : static_cast<int>(h[0].cols()); }
};
using HiddenState = HiddenStateT<double>;

template <typename T>
HiddenStateT<T> zero_hidden(const NetworkConfig& config, int batch = 1);

enum class Mode { Train, Infer };

/// Reusable scratch space for forward_step so repeated inference does not
/// allocate.
template <typename T>
struct ForwardScratch {
  Mat<T> patches, conv, concat, lstm_in;
  std::vector<Mat<T>> acts;
};

/// One timestep for a batch of observations (2336 x batch, flat layout).
/// Updates `hidden` in place and writes logits (165 x batch, 11 x batch).
/// `dropout_rng` is only read in Train mode.
template <typename T>
void forward_step(const NetworkParamsT<T>& params, const Mat<T>& observations,
                  HiddenStateT<T>& hidden, Mode mode, std::mt19937_64* dropout_rng,
                  Mat<T>& aim_logits, Mat<T>& key_logits, ForwardScratch<T>* scratch = nullptr);

struct ActionDistribution {
  std::array<double, kNumAimActions> aim_logits{};
  std::array<double, kNumKeys> key_logits{};

  std::array<double, kNumAimActions> aim_probs() const;
  std::array<double, kNumKeys> key_probs() const;
};

/// Single-observation convenience wrapper around forward_step.
ActionDistribution forward(const NetworkParams& params, const Observation& observation,
                           HiddenState& hidden, Mode mode = Mode::Infer,
                           std::mt19937_64* dropout_rng = nullptr);

/// Cross-entropy of the aim target plus the summed binary cross-entropy of
/// the 11 keys, both computed from logits in a numerically stable form.
double bc_loss(const ActionDistribution& dist, const Action& target);

/// A batch of equal-length sequences. `mask[t][b]` marks the timesteps that
/// count towards the loss.
struct SequenceBatch {
  int length = 0;
  int batch = 0;
  std::vector<Mat<double>> observations;          // per t: 2336 x batch
  std::vector<std::vector<int>> aim;              // per t, per b
  std::vector<std::vector<std::uint16_t>> keys;   // per t, per b
  std::vector<std::vector<std::uint8_t>> mask;    // per t, per b
  // Optional class weights: per aim class (165) and per key for positive
  // labels (11). Empty means unweighted.
  std::vector<double> aim_weight;
  std::vector<double> key_pos_weight;

  SequenceBatch() = default;
  SequenceBatch(int length, int batch);
  int valid_steps() const;
};

struct LossResult {
  double loss = 0.0;  // mean over valid steps
  int valid_steps = 0;
  int aim_correct = 0;
  std::array<int, kNumKeys> key_correct{};
};

/// Forward over the batch starting from `hidden` (updated to the final
/// state), returning the mean loss. When `grad` is non-null it receives the
/// exact gradient of that mean loss (resized and overwritten); gradients do
/// not flow into the incoming hidden state.
LossResult loss_and_gradient(const NetworkParams& params, const SequenceBatch& batch,
                             HiddenState& hidden, Mode mode, std::mt19937_64* dropout_rng,
                             std::vector<double>* grad);

/// Truncated BPTT over one sequence: split into windows, carry the hidden
/// state across window boundaries, stop gradients there. Returns the
/// gradient of the mean loss over all steps. A window of 0 disables
/// truncation.
std::vector<double> backward(const NetworkParams& params,
                             const std::vector<Observation>& observations,
                             const std::vector<Action>& targets, int window, Mode mode,
                             std::uint64_t dropout_seed, double* mean_loss = nullptr);

// --- Checkpoints -----------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

struct Checkpoint {
  NetworkParams params;
  int epoch = 0;
  AdamState optimizer;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Binary container: magic "TBCK", version, config JSON, seed, epoch,
/// optimizer moments, parameter values (little-endian doubles) and an
/// FNV-1a 64 checksum of everything before it. Written to a temporary file
/// and renamed, so a failed write never clobbers an existing checkpoint.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ULL);

}  // namespace tacbot
