#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tacbot/dataset.hpp"
#include "tacbot/net.hpp"
#include "tacbot/world.hpp"

namespace tacbot {

std::uint64_t splitmix64(std::uint64_t x);
/// Order-sensitive combination of seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

enum class AbilityPolicy : std::uint8_t {
  None = 0,   // never uses abilities
  Tactical,   // smoke/block while approaching or holding, fire/flash on 9-15 m duels
  Eager,      // throws whatever is off cooldown at any engaged enemy
};

const char* to_string(AbilityPolicy a);

/// Parameters of one scripted demonstrator.
struct ExpertProfile {
  std::string name = "expert";
  double aim_noise_sigma = 2.0;  // degrees, [0, 30]
  int reaction_delay = 3;        // ticks, [0, 32]
  double aggression = 0.5;       // [0, 1]
  double camp_bias = 0.5;        // [0, 1]
  AbilityPolicy ability_policy = AbilityPolicy::Tactical;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for a parameter outside its range.
  void validate() const;
  bool operator==(const ExpertProfile&) const = default;
};

void to_json(nlohmann::json& j, const ExpertProfile& p);
void from_json(const nlohmann::json& j, ExpertProfile& p);

/// Four profiles with spread-out skill, one per player id.
std::array<ExpertProfile, kNumPlayers> default_roster();

/// Per-player, per-round memory of an expert.
struct ExpertState {
  std::mt19937_64 rng;
  std::array<int, kNumPlayers> seen_ticks{};  // consecutive ticks each enemy was visible
  int target = -1;
  double noise_yaw = 0.0;
  double noise_pitch = 0.0;
  int noise_age = 0;
  Vec2 last_seen;
  std::int64_t last_seen_tick = -1000;
  Vec2 hold_point;
  double hold_yaw = 0.0;
  int hold_ticks = 0;
  Vec2 site_goal;
  Vec2 last_position;
  int stuck_ticks = 0;
  int unstick_ticks = 0;
  bool unstick_left = false;
  int strafe_ticks = 0;
  bool strafe_left = false;
  bool planted_guard_set = false;
};

ExpertState expert_init(const WorldState& world, int player_id, const ExpertProfile& profile,
                        std::uint64_t round_seed);

/// One decision of the scripted expert. Reads privileged world state.
/// The player must be alive.
Action expert_act(const WorldState& world, int player_id, const ExpertProfile& profile,
                  ExpertState& state);

/// Enemy ids inside the +-60 degree horizontal view cone with a clear line
/// of sight from the player's eye to the enemy's center.
std::vector<int> visible_enemies(const WorldState& world, int player_id);

/// Uniform aim index and an independent fair coin per key.
Action random_act(std::mt19937_64& rng);

/// kills / deaths, with zero deaths counted as one.
double kdr(int kills, int deaths);
/// (kills + assists) / (kills + assists + deaths), 0 when all three are 0.
double akdr(int kills, int assists, int deaths);

// --- Running rounds ----------------------------------------------------------------

/// Chooses the actions of all four players every tick.
class Driver {
 public:
  virtual ~Driver() = default;
  virtual bool needs_observations() const { return false; }
  virtual void begin_round(const WorldState& world, std::uint64_t round_seed) = 0;
  /// `observations` is null unless needs_observations() or the runner records
  /// trajectories. Dead players' actions are ignored.
  virtual void act(const WorldState& world, const std::array<Observation, kNumPlayers>* observations,
                   std::array<Action, kNumPlayers>& actions) = 0;
};

class ExpertDriver : public Driver {
 public:
  explicit ExpertDriver(std::array<ExpertProfile, kNumPlayers> roster);
  void begin_round(const WorldState& world, std::uint64_t round_seed) override;
  void act(const WorldState& world, const std::array<Observation, kNumPlayers>* observations,
           std::array<Action, kNumPlayers>& actions) override;

 private:
  std::array<ExpertProfile, kNumPlayers> roster_;
  std::array<ExpertState, kNumPlayers> state_;
};

class RandomDriver : public Driver {
 public:
  void begin_round(const WorldState& world, std::uint64_t round_seed) override;
  void act(const WorldState& world, const std::array<Observation, kNumPlayers>* observations,
           std::array<Action, kNumPlayers>& actions) override;

 private:
  std::mt19937_64 rng_;
};

/// Turns toward the nearest visible enemy with noiseless snapped aim,
/// strafing in alternating 12-tick bursts and firing once aligned. With no
/// enemy in view it walks toward the bombsite, then turns in place there.
Action tracker_act(const WorldState& world, int player_id);

class TrackerDriver : public Driver {
 public:
  void begin_round(const WorldState& world, std::uint64_t round_seed) override;
  void act(const WorldState& world, const std::array<Observation, kNumPlayers>* observations,
           std::array<Action, kNumPlayers>& actions) override;
};

/// Runs a trained network for all four players as one batch in single
/// precision. Aim is sampled from softmax(logits / temperature) and each key
/// from sigmoid(logit / temperature); temperature 0 takes the argmax aim and
/// presses keys with positive logits. The recurrent state resets at every
/// round start.
class ModelDriver : public Driver {
 public:
  ModelDriver(const NetworkParams& params, double temperature);
  bool needs_observations() const override { return true; }
  void begin_round(const WorldState& world, std::uint64_t round_seed) override;
  void act(const WorldState& world, const std::array<Observation, kNumPlayers>* observations,
           std::array<Action, kNumPlayers>& actions) override;

 private:
  NetworkParamsT<float> params_;
  double temperature_;
  HiddenStateT<float> hidden_;
  ForwardScratch<float> scratch_;
  Mat<float> input_, aim_logits_, key_logits_;
  std::mt19937_64 rng_;
};

/// Attackers of a round: players 0 and 1 on even rounds of a match, 2 and 3
/// on odd rounds.
RoundSetup match_round_setup(int round_in_match);

struct RoundResult {
  RoundLog log;
  std::vector<Trajectory> trajectories;  // one per player when recorded
};

/// Plays one round to completion. Every tick each alive player observes the
/// pre-step world, the driver chooses actions, and the world steps.
RoundResult run_round(std::shared_ptr<const MapGeometry> map, const RoundSetup& setup,
                      std::uint64_t seed, Driver& driver, bool record_trajectories,
                      int round_id = 0, int match_id = 0);

/// Re-simulates a logged round from its seed and actions and regenerates
/// every player's trajectory.
std::vector<Trajectory> replay_round(std::shared_ptr<const MapGeometry> map, const RoundLog& log);

/// Fills kills, deaths, assists and result of each trajectory from the log.
void annotate_trajectories(const RoundLog& log, std::vector<Trajectory>& trajectories);

/// Plays n_matches matches of `rounds_per_match` rounds with sides swapping
/// every round. Round seeds derive from `seed`.
Dataset run_matches(std::shared_ptr<const MapGeometry> map, Driver& driver, int n_matches,
                    std::uint64_t seed, int rounds_per_match, bool record_trajectories);

/// Expert demonstrations with trajectories, logs and a manifest.
Dataset generate_dataset(int n_matches, const std::array<ExpertProfile, kNumPlayers>& roster,
                         std::shared_ptr<const MapGeometry> map, std::uint64_t seed,
                         int rounds_per_match = 2);

/// Tracker demonstrations (see TrackerDriver) with trajectories and logs.
Dataset generate_tracker_dataset(int n_matches, std::shared_ptr<const MapGeometry> map,
                                 std::uint64_t seed, int rounds_per_match = 2);

/// Matches played by a trained network controlling all four players.
Dataset model_rollout(const NetworkParams& params, std::shared_ptr<const MapGeometry> map,
                      int n_matches, double temperature, std::uint64_t seed,
                      int rounds_per_match = 2, bool record_trajectories = false);

/// Per-player kill statistics summed over rounds, indexed by player id.
struct PlayerTally {
  int kills = 0;
  int deaths = 0;
  int assists = 0;
};
std::array<PlayerTally, kNumPlayers> tally(const std::vector<RoundLog>& rounds);

}  // namespace tacbot
