#pragma once

#include <array>
#include <span>

#include "tacbot/world.hpp"

namespace tacbot {

inline constexpr int kGrid = 15;
inline constexpr int kVisualLayers = 10;
inline constexpr int kAudioSectors = 8;
inline constexpr int kAudioTypes = kNumEventKinds;
inline constexpr int kScalarDim = 27;
inline constexpr int kSpatialDim = 11;
inline constexpr int kVisualSize = kGrid * kGrid * kVisualLayers;  // 2250
inline constexpr int kAudioSize = kAudioSectors * kAudioTypes;     // 48
inline constexpr int kObservationSize = kVisualSize + kAudioSize + kScalarDim + kSpatialDim;
inline constexpr int kCenterCell = 7;

enum class VisualLayer : int {
  Enemies = 0,
  Teammates,
  EnemyGrenades,
  TeamGrenades,
  Smoke,
  Fire,
  DroppedBomb,
  PlantedBomb,
  Bombsite,
  Other,
};

/// 15 pitch rows x 15 yaw columns x 10 layers, stored row-major with the
/// layer innermost. 1.0 means nothing detected within range.
struct VisualTensor {
  std::array<double, kVisualSize> values;

  VisualTensor() { values.fill(1.0); }
  static int offset(int row, int col, int layer) { return (row * kGrid + col) * kVisualLayers + layer; }
  double& at(int row, int col, VisualLayer l) { return values[offset(row, col, static_cast<int>(l))]; }
  double at(int row, int col, VisualLayer l) const {
    return values[offset(row, col, static_cast<int>(l))];
  }
  bool operator==(const VisualTensor&) const = default;
};

/// 8 egocentric sectors (sector 0 straight ahead, counter-clockwise) x 6
/// sound types in EventKind order. 0 means silence.
struct AudioMatrix {
  std::array<double, kAudioSize> values{};

  double& at(int sector, EventKind k) { return values[sector * kAudioTypes + static_cast<int>(k)]; }
  double at(int sector, EventKind k) const {
    return values[sector * kAudioTypes + static_cast<int>(k)];
  }
  bool operator==(const AudioMatrix&) const = default;
};

/// Index names for the 27 normalized game-state features.
namespace scalar {
enum : int {
  kIsAttacking = 0,
  kIsJumping,
  kIsFalling,
  kIsShooting,
  kIsBeingShot,
  kIsCrouching,
  kHasZero,
  kHasSkySmoke,
  kHasIncendiary,
  kHasFlash,
  kMainCooldown,
  kSecondaryCooldown,
  kHealth,
  kPitch,
  kYaw,
  kReserveAmmo,
  kMagazineAmmo,
  kHasBomb,
  kTeammateHasBomb,
  kIsDropping,
  kIsPlanting,
  kIsDefusing,
  kBombPlanted,
  kPlantProgress,
  kDefuseProgress,
  kExplodeTimer,
  kTimeLeft,
};
}  // namespace scalar

struct ScalarState {
  std::array<double, kScalarDim> values{};
  bool operator==(const ScalarState&) const = default;
};

/// Index names for the 11 spatial features.
namespace spatial {
enum : int {
  kTeammateDistance = 0,
  kBombsiteDistance,
  kBombDistance,
  kTeammateDirX,
  kTeammateDirY,
  kBombsiteDirX,
  kBombsiteDirY,
  kBombDirX,
  kBombDirY,
  kMinEnemyDistance,
  kMinEnemyGrenadeDistance,
};
}  // namespace spatial

struct SpatialVector {
  std::array<double, kSpatialDim> values{};
  bool operator==(const SpatialVector&) const = default;
};

struct Observation {
  VisualTensor visual;
  AudioMatrix audio;
  ScalarState scalar;
  SpatialVector spatial;

  /// Writes the fixed-order flat layout: visual, audio, scalar, spatial.
  void flatten(std::span<float> out) const;
  void flatten(std::span<double> out) const;
  static Observation unflatten(std::span<const float> in);

  /// Observation recorded for a dead player.
  static Observation blank();

  bool operator==(const Observation&) const = default;
};

struct VisualStats {
  int grid_rays = 0;
  int target_rays = 0;
};

VisualTensor sense_visual(const WorldState& world, int player_id, VisualStats* stats = nullptr);
AudioMatrix sense_audio(const WorldState& world, int player_id);
ScalarState sense_scalar(const WorldState& world, int player_id);
SpatialVector sense_spatial(const WorldState& world, int player_id);

/// Full sensory frame; a dead player gets Observation::blank().
Observation observe(const WorldState& world, int player_id, VisualStats* stats = nullptr);

/// Visual layer a ray hit maps to from the observer's point of view, or -1
/// for a miss.
int layer_for_hit(const WorldState& world, const PlayerState& observer, const Hit& hit);

}  // namespace tacbot
