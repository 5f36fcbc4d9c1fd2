#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tacbot/sensors.hpp"
#include "tacbot/world.hpp"

namespace tacbot {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- Match logs ---------------------------------------------------------------

struct PlayerSnapshot {
  Vec3 position;
  double yaw = 0.0;
  double pitch = 0.0;
  double health = 0.0;
  int magazine = 0;
  int reserve = 0;
  bool alive = false;
  bool has_bomb = false;
  bool is_planting = false;
  bool is_defusing = false;
  bool operator==(const PlayerSnapshot&) const = default;
};

PlayerSnapshot snapshot(const PlayerState& p);

/// One simulator step: the actions applied, what the step produced, and the
/// player/bomb state after it.
struct TickLog {
  std::int64_t tick = 0;
  std::array<Action, kNumPlayers> actions{};
  std::array<PlayerSnapshot, kNumPlayers> players{};
  std::vector<GameEvent> events;
  std::vector<KillRecord> kills;
  std::vector<AbilityUse> abilities;
  std::vector<ObjectiveEvent> objectives;
  BombPhase bomb_phase = BombPhase::Carried;
  Vec3 bomb_position;
  int round_ticks_left = 0;
  bool operator==(const TickLog&) const = default;
};

struct RoundLog {
  int round_id = 0;
  int match_id = 0;
  std::uint64_t seed = 0;
  std::string map_name;
  std::array<Team, kNumPlayers> teams{};
  std::array<Role, kNumPlayers> roles{};
  std::array<PlayerSnapshot, kNumPlayers> start{};
  std::vector<TickLog> ticks;
  Outcome outcome = Outcome::Ongoing;

  int duration() const { return static_cast<int>(ticks.size()); }
  bool operator==(const RoundLog&) const = default;
};

/// Line-delimited JSON: a "round_start" object, one "tick" object per step,
/// then a "round_end" object, repeated per round.
void write_match_log(const std::vector<RoundLog>& rounds, const std::filesystem::path& path);
std::vector<RoundLog> read_match_log(const std::filesystem::path& path);
std::vector<RoundLog> parse_match_log(std::istream& in);

// --- Trajectories ---------------------------------------------------------------

struct TrajectoryMeta {
  int player_id = 0;
  Team team = Team::Attacker;
  Role role = Role::Controller;
  int round_id = 0;
  int kills = 0;
  int deaths = 0;
  int assists = 0;
  Outcome result = Outcome::Ongoing;
  bool operator==(const TrajectoryMeta&) const = default;
};

/// Per-player, per-round (Observation, Action) sequence at 16 Hz. Only the
/// alive prefix is held in memory; frames after death are blank
/// observations with no-op actions.
struct Trajectory {
  TrajectoryMeta meta;
  int frame_count = 0;
  std::vector<float> observations;  // alive_frames() x kObservationSize
  std::vector<Action> actions;      // alive_frames()

  int alive_frames() const { return static_cast<int>(actions.size()); }
  const float* observation(int t) const { return observations.data() + static_cast<std::size_t>(t) * kObservationSize; }
  void push(const Observation& o, const Action& a);
  bool operator==(const Trajectory&) const = default;
};

/// Binary layout (little-endian): magic "TBTR", u32 version, u32 tick rate,
/// u32 dims [15, 15, 10, 8, 6, 27, 11], i32 player id, u8 team, u8 role,
/// i32 round id, i32 kills, deaths, assists, u8 result, u32 frame count,
/// u32 alive frames, then one record per alive frame: 2336 float32
/// observation values, u16 aim index and u16 key bits (W, A, S, D, Space,
/// 4, G, R, Q, E, LeftClick as bits 0..10). The remaining frames up to the
/// frame count are blank observations with no-op actions and are not stored.
void write_trajectory(const Trajectory& t, const std::filesystem::path& path);
Trajectory read_trajectory(const std::filesystem::path& path);

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::vector<RoundLog> rounds;
  nlohmann::json manifest = nlohmann::json::object();

  std::int64_t total_timesteps() const;
  std::int64_t alive_timesteps() const;
};

/// Directory layout: manifest.json, trajectories/round_RRRRR_player_P.traj,
/// logs/match_MMMM.jsonl.
void save_dataset(const Dataset& d, const std::filesystem::path& dir);
/// `with_logs` = false skips the match logs.
Dataset load_dataset(const std::filesystem::path& dir, bool with_logs = true);

}  // namespace tacbot
