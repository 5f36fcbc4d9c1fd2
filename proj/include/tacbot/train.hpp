#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tacbot/dataset.hpp"
#include "tacbot/net.hpp"

namespace tacbot {

struct TrainConfig {
  double learning_rate = 3e-4;
  double weight_decay = 1e-3;  // L2 coefficient added to every gradient
  /// Reads "decay" as a learning-rate schedule lr / (1 + decay * epoch)
  /// instead of L2 weight decay.
  bool lr_decay = false;
  int batch_size = 96;
  int epochs = 50;
  int bptt_window = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double eval_fraction = 0.2;
  /// Inverse-frequency weights for aim classes and positive key labels.
  bool reweight = false;

  /// Throws std::invalid_argument on a non-positive or out-of-range value.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Contiguous run of alive frames inside one trajectory.
struct Window {
  int trajectory = 0;
  int start = 0;
  int length = 0;
};

/// Splits each trajectory's alive frames into windows of `window` steps;
/// the last window of a trajectory may be shorter.
std::vector<Window> make_windows(const std::vector<Trajectory>& trajectories,
                                 const std::vector<int>& which, int window);

/// Trajectory indices of the training and held-out parts. Whole
/// trajectories go to one side only; both sides are non-empty when there
/// are at least two trajectories with alive frames.
struct Split {
  std::vector<int> train;
  std::vector<int> heldout;
};
Split split_trajectories(const std::vector<Trajectory>& trajectories, double eval_fraction,
                         std::uint64_t seed);

/// Packs windows into one padded batch (length = longest window), masking
/// padded steps.
SequenceBatch make_batch(const std::vector<Trajectory>& trajectories, const std::vector<Window>& windows);

struct Metrics {
  double loss = 0.0;
  double aim_accuracy = 0.0;
  std::array<double, kNumKeys> key_accuracy{};
  std::int64_t steps = 0;
};

void to_json(nlohmann::json& j, const Metrics& m);

/// Inference-mode loss and accuracies over the given trajectories, chunked
/// into windows with a zero hidden state per window.
Metrics evaluate(const NetworkParams& params, const std::vector<Trajectory>& trajectories,
                 const std::vector<int>& which, int window = 64, int batch_size = 96);

/// Most frequent aim index among the alive frames of the given trajectories
/// (ties to the lower index) and its frequency in `measure_on`.
struct MajorityBaseline {
  int aim_index = kNoOpAimIndex;
  double accuracy = 0.0;
};
MajorityBaseline majority_baseline(const std::vector<Trajectory>& trajectories,
                                   const std::vector<int>& fit_on, const std::vector<int>& measure_on);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  Metrics heldout;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;  // epoch 0 is the untrained model
  int best_epoch = 0;
  double best_heldout_loss = 0.0;
  MajorityBaseline baseline;
  std::int64_t train_steps = 0;
  std::int64_t heldout_steps = 0;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::string final_checkpoint;
};

void to_json(nlohmann::json& j, const TrainReport& r);

struct TrainResult {
  NetworkParams params;  // best held-out parameters
  TrainReport report;
  Checkpoint last;       // state after the final completed epoch
};

struct TrainOptions {
  /// Directory for best.ckpt, last.ckpt and report.json; empty keeps
  /// everything in memory.
  std::filesystem::path out_dir;
  /// Continue from this checkpoint (parameters, optimizer and epoch count).
  std::optional<Checkpoint> resume;
  bool verbose = false;
};

/// Behavior cloning: Adam on the mean masked loss of batches of windows,
/// each window starting from a zero hidden state. Keeps the parameters with
/// the lowest held-out loss. A non-finite training loss stops training and
/// returns the last good state with `diverged` set.
TrainResult bc_train(const std::vector<Trajectory>& trajectories, const NetworkConfig& net,
                     const TrainConfig& config, const TrainOptions& options = {});

/// Copy of the trajectories with the actions of the given trajectories
/// permuted across all of their alive frames.
std::vector<Trajectory> shuffle_labels(std::vector<Trajectory> trajectories,
                                       const std::vector<int>& which, std::uint64_t seed);

}  // namespace tacbot
