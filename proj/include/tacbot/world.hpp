#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "tacbot/actions.hpp"
#include "tacbot/geometry.hpp"
#include "tacbot/map.hpp"

namespace tacbot {

// Clock.
inline constexpr int kTickRate = 16;
inline constexpr double kDt = 1.0 / kTickRate;
inline constexpr int kRoundTicks = 120 * kTickRate;        // 1920
inline constexpr int kFuseTicks = 45 * kTickRate;          // 720
inline constexpr int kMaxRoundTicks = kRoundTicks + kFuseTicks;
inline constexpr int kPlantTicks = 4 * kTickRate;          // 64
inline constexpr int kDefuseTicks = 7 * kTickRate;         // 112
inline constexpr int kBeepIntervalTicks = kTickRate;

// Movement.
inline constexpr double kRunSpeed = 6.0;
inline constexpr double kCrouchSpeed = 2.5;
inline constexpr double kJumpApex = 0.9;
inline constexpr double kJumpRiseTime = 0.6;
inline constexpr double kJumpVelocity = 2.0 * kJumpApex / kJumpRiseTime;  // 3 m/s
inline constexpr double kGravity = kJumpVelocity / kJumpRiseTime;         // 5 m/s^2
inline constexpr double kEyeStanding = 1.6;
inline constexpr double kEyeCrouched = 1.0;
inline constexpr double kHeightStanding = 1.8;
inline constexpr double kHeightCrouched = 1.2;

// Pistol.
inline constexpr double kShotDamage = 30.0;
inline constexpr int kShotIntervalTicks = 3;  // 5.33 shots/s, under the 6/s cap
inline constexpr int kMagazineSize = 12;
inline constexpr int kReserveSize = 48;
inline constexpr int kReloadTicks = kTickRate;
inline constexpr double kMaxHealth = 100.0;

// Abilities.
inline constexpr int kAbilityCooldownTicks = 60 * kTickRate;
inline constexpr double kGrenadeSpeed = 12.0;
inline constexpr int kGrenadeFuseTicks = kTickRate;
inline constexpr double kGrenadeHeight = 1.0;
inline constexpr double kGrenadeRadius = 0.15;
inline constexpr double kSmokeRadius = 4.0;
inline constexpr int kSmokeTicks = 10 * kTickRate;
inline constexpr double kBlockRadius = 4.0;
inline constexpr int kBlockTicks = 6 * kTickRate;
inline constexpr double kFireRadius = 3.0;
inline constexpr int kFireTicks = 6 * kTickRate;
inline constexpr double kFireDps = 10.0;
inline constexpr double kFireHeight = 1.0;
inline constexpr double kFlashRadius = 5.0;
inline constexpr int kFlashTicks = 2 * kTickRate;

// Bomb.
inline constexpr double kDefuseRange = 1.5;
inline constexpr double kPickupRange = 1.0;
inline constexpr int kRepickupDelayTicks = 2 * kTickRate;
inline constexpr double kBombRadius = 0.3;
inline constexpr double kBombCenterZ = 0.3;

inline constexpr double kMaxSenseDistance = 100.0;

enum class Team : std::uint8_t { Attacker = 0, Defender = 1 };
enum class Role : std::uint8_t { Controller = 0, Initiator = 1 };
enum class BombPhase : std::uint8_t { Carried = 0, Dropped, Planted, Defused, Exploded };
/// Audio event kinds; the order is the audio-matrix column order.
enum class EventKind : std::uint8_t { Footstep = 0, Jump, Shot, BombBeep, GrenadeExplosion, BombDrop };
enum class EffectKind : std::uint8_t { Smoke = 0, Fire, Flash, AbilityBlock };
enum class Outcome : std::uint8_t { Ongoing = 0, AttackersWin, DefendersWin };

inline constexpr int kNumEventKinds = 6;
inline constexpr int kNumPlayers = 4;

const char* to_string(Team t);
const char* to_string(Role r);
const char* to_string(BombPhase p);
const char* to_string(EventKind k);
const char* to_string(EffectKind k);
const char* to_string(Outcome o);

struct PlayerState {
  int id = 0;
  Team team = Team::Attacker;
  Role role = Role::Controller;
  Vec3 position;
  double yaw = 0.0;    // degrees [0, 360), counter-clockwise from +x
  double pitch = 0.0;  // degrees [-90, 90], up positive
  double health = kMaxHealth;
  int magazine = kMagazineSize;
  int reserve = kReserveSize;
  int main_cooldown_ticks = 0;
  int secondary_cooldown_ticks = 0;
  double vertical_velocity = 0.0;
  bool is_jumping = false;
  bool is_falling = false;
  bool is_crouching = false;
  bool is_shooting = false;
  bool is_being_shot = false;
  bool has_bomb = false;
  bool is_planting = false;
  bool is_defusing = false;
  bool is_dropping = false;
  int plant_ticks = 0;
  int defuse_ticks = 0;
  int shot_cooldown_ticks = 0;
  int reload_ticks = 0;
  bool alive = true;

  double main_cooldown() const { return main_cooldown_ticks * kDt; }
  double secondary_cooldown() const { return secondary_cooldown_ticks * kDt; }
  double plant_progress() const { return plant_ticks * kDt; }
  double defuse_progress() const { return defuse_ticks * kDt; }
  bool grounded() const { return position.z <= 0.0 && vertical_velocity == 0.0; }
  double eye_height() const { return is_crouching ? kEyeCrouched : kEyeStanding; }
  double body_height() const { return is_crouching ? kHeightCrouched : kHeightStanding; }
  Vec3 eye() const { return {position.x, position.y, position.z + eye_height()}; }
  Vec3 center() const { return {position.x, position.y, position.z + 0.5 * body_height()}; }

  bool operator==(const PlayerState&) const = default;
};

struct BombState {
  BombPhase phase = BombPhase::Carried;
  Vec3 position;
  int carrier = -1;
  int fuse_ticks = kFuseTicks;
  std::int64_t planted_tick = -1;
  int dropper = -1;
  std::int64_t drop_tick = -1;

  double fuse_remaining() const { return fuse_ticks * kDt; }
  bool operator==(const BombState&) const = default;
};

struct GameEvent {
  EventKind kind = EventKind::Footstep;
  Vec3 source;
  int emitter = -1;  // player id, -1 when no player emitted it
  std::int64_t tick = 0;
  bool operator==(const GameEvent&) const = default;
};

struct Grenade {
  int owner = -1;
  Team team = Team::Attacker;
  EffectKind payload = EffectKind::Smoke;
  Vec3 position;
  Vec2 velocity;
  int fuse_ticks = kGrenadeFuseTicks;
  bool operator==(const Grenade&) const = default;
};

struct AreaEffect {
  EffectKind kind = EffectKind::Smoke;
  Vec3 center;
  double radius = 0.0;
  int remaining_ticks = 0;
  Team owner_team = Team::Attacker;
  int owner = -1;

  double remaining() const { return remaining_ticks * kDt; }
  bool operator==(const AreaEffect&) const = default;
};

struct KillRecord {
  int killer = -1;
  int victim = -1;
  std::vector<int> assisters;
  bool operator==(const KillRecord&) const = default;
};

struct AbilityUse {
  int player = -1;
  bool main = true;
  bool operator==(const AbilityUse&) const = default;
};

enum class ObjectiveKind : std::uint8_t { Planted = 0, Defused, Exploded };

struct ObjectiveEvent {
  ObjectiveKind kind = ObjectiveKind::Planted;
  int player = -1;
  bool operator==(const ObjectiveEvent&) const = default;
};

struct WorldState {
  std::shared_ptr<const MapGeometry> map;
  std::array<PlayerState, kNumPlayers> players;
  BombState bomb;
  std::vector<Grenade> grenades;
  std::vector<AreaEffect> effects;
  std::int64_t tick = 0;
  int round_ticks_left = kRoundTicks;
  std::uint64_t rng_seed = 0;

  // Per-tick outputs, cleared at the start of every step.
  std::vector<GameEvent> events_this_tick;
  std::vector<KillRecord> kills_this_tick;
  std::vector<AbilityUse> abilities_this_tick;
  std::vector<ObjectiveEvent> objectives_this_tick;

  // Round bookkeeping.
  std::array<std::array<double, kNumPlayers>, kNumPlayers> damage_dealt{};
  std::array<bool, kNumPlayers> fire_intent{};

  double round_time_left() const { return round_ticks_left * kDt; }

  /// Equality of dynamic state (map compared by identity).
  bool operator==(const WorldState& o) const;
};

/// Which players attack this round; the rest defend. Roles: ids 0 and 2
/// are controllers, 1 and 3 initiators.
struct RoundSetup {
  std::array<int, 2> attackers = {0, 1};
};

WorldState new_round(std::shared_ptr<const MapGeometry> map, const RoundSetup& setup,
                     std::uint64_t seed);

// --- Raycasting -----------------------------------------------------------

enum class HitKind : std::uint8_t {
  Miss = 0,
  Geometry,  // walls, floor and ceiling outside the bombsite
  Bombsite,  // floor inside the bombsite rectangle
  Player,
  Grenade,
  Smoke,
  Fire,
  DroppedBomb,
  PlantedBomb,
};

struct Hit {
  HitKind kind = HitKind::Miss;
  double distance = kMaxSenseDistance;
  int index = -1;  // player id, grenade or effect index
};

/// Selects which dynamic objects a ray may stop on.
struct RayFilter {
  int ignore_player = -1;
  bool players = true;
  bool grenades = true;
  bool smoke = true;
  bool fire = true;
  bool bomb = true;
  bool bombsite = true;

  static RayFilter vision(int self) { return {self, true, true, true, true, true, true}; }
  /// Bullets stop on walls and bodies only.
  static RayFilter bullet(int self) { return {self, true, false, false, false, false, false}; }
};

/// Nearest intersection along origin + t * direction for t in [0, max_dist].
/// `dynamic` may be null for static geometry only. `direction` must be unit.
Hit raycast(const MapGeometry& map, const WorldState* dynamic, const Vec3& origin,
            const Vec3& direction, double max_dist = kMaxSenseDistance,
            const RayFilter& filter = {});

/// Entry distance of a ray into a vertical cylinder [z0, z1], or -1.
double ray_cylinder(const Vec3& origin, const Vec3& dir, Vec2 center, double radius, double z0,
                    double z1);
/// Entry distance of a ray into a sphere, or -1.
double ray_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius);

// --- Stepping -------------------------------------------------------------

/// Applies one player's action for the current tick. Rotation is immediate;
/// firing is queued and resolved by step() after every player has acted.
void apply_action(WorldState& world, int player_id, const Action& action);

/// Advances the world by one tick. Throws std::logic_error on a terminal world.
void step(WorldState& world, const std::array<Action, kNumPlayers>& actions);

Outcome check_round_end(const WorldState& world);

bool inside_enemy_effect(const WorldState& world, const PlayerState& p, EffectKind kind);

}  // namespace tacbot
