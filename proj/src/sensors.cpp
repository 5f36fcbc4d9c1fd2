#include "tacbot/sensors.hpp"

#include <algorithm>
#include <cmath>

namespace tacbot {
namespace {

double normalized(double d) { return std::clamp(d, 0.0, kMaxSenseDistance) / kMaxSenseDistance; }

double min_or_one(double current, double candidate) { return std::min(current, candidate); }

struct Target {
  Vec3 point;
  VisualLayer layer;
  HitKind kind;
  int index;
};

}  // namespace

int layer_for_hit(const WorldState& w, const PlayerState& me, const Hit& hit) {
  switch (hit.kind) {
    case HitKind::Miss: return -1;
    case HitKind::Geometry: return static_cast<int>(VisualLayer::Other);
    case HitKind::Bombsite: return static_cast<int>(VisualLayer::Bombsite);
    case HitKind::Player:
      return static_cast<int>(w.players[hit.index].team == me.team ? VisualLayer::Teammates
                                                                     : VisualLayer::Enemies);
    case HitKind::Grenade:
      return static_cast<int>(w.grenades[hit.index].team == me.team ? VisualLayer::TeamGrenades
                                                                      : VisualLayer::EnemyGrenades);
    case HitKind::Smoke: return static_cast<int>(VisualLayer::Smoke);
    case HitKind::Fire: return static_cast<int>(VisualLayer::Fire);
    case HitKind::DroppedBomb: return static_cast<int>(VisualLayer::DroppedBomb);
    case HitKind::PlantedBomb: return static_cast<int>(VisualLayer::PlantedBomb);
  }
  return -1;
}

VisualTensor sense_visual(const WorldState& w, int id, VisualStats* stats) {
  const PlayerState& me = w.players.at(id);
  VisualTensor out;
  VisualStats local;
  if (inside_enemy_effect(w, me, EffectKind::Flash)) {
    if (stats) *stats = local;
    return out;
  }
  const Vec3 eye = me.eye();
  const RayFilter filter = RayFilter::vision(id);

  for (int row = 0; row < kGrid; ++row) {
    for (int col = 0; col < kGrid; ++col) {
      const Vec3 dir = direction_from_angles(me.yaw + kYawAngles[col],
                                             me.pitch + kPitchSensorAngles[row]);
      const Hit hit = raycast(*w.map, &w, eye, dir, kMaxSenseDistance, filter);
      ++local.grid_rays;
      const int layer = layer_for_hit(w, me, hit);
      if (layer >= 0) out.values[VisualTensor::offset(row, col, layer)] = normalized(hit.distance);
    }
  }

  // One extra ray per important object inside the 90 degree horizontal
  // field of view, written into the nearest grid cell of its layer.
  std::vector<Target> targets;
  for (const auto& p : w.players) {
    if (!p.alive || p.id == id) continue;
    targets.push_back({p.center(), p.team == me.team ? VisualLayer::Teammates : VisualLayer::Enemies,
                       HitKind::Player, p.id});
  }
  for (std::size_t i = 0; i < w.grenades.size(); ++i) {
    const Grenade& g = w.grenades[i];
    targets.push_back({g.position,
                       g.team == me.team ? VisualLayer::TeamGrenades : VisualLayer::EnemyGrenades,
                       HitKind::Grenade, static_cast<int>(i)});
  }
  for (std::size_t i = 0; i < w.effects.size(); ++i) {
    const AreaEffect& e = w.effects[i];
    if (e.kind != EffectKind::Fire) continue;
    targets.push_back({{e.center.x, e.center.y, 0.5 * kFireHeight}, VisualLayer::Fire, HitKind::Fire,
                       static_cast<int>(i)});
  }
  if (w.bomb.phase == BombPhase::Dropped) {
    targets.push_back({{w.bomb.position.x, w.bomb.position.y, kBombCenterZ}, VisualLayer::DroppedBomb,
                       HitKind::DroppedBomb, -1});
  } else if (w.bomb.phase == BombPhase::Planted) {
    targets.push_back({{w.bomb.position.x, w.bomb.position.y, kBombCenterZ}, VisualLayer::PlantedBomb,
                       HitKind::PlantedBomb, -1});
  }
  const Vec2 site = w.map->bombsite.center();
  targets.push_back({{site.x, site.y, 0.0}, VisualLayer::Bombsite, HitKind::Bombsite, -1});

  for (const Target& t : targets) {
    const Vec3 to = t.point - eye;
    const double planar = to.xy().norm();
    if (planar <= 0.0) continue;
    const double yaw_off = wrap180(heading_deg(to.xy()) - me.yaw);
    if (std::abs(yaw_off) > 45.0) continue;
    const Vec3 dir = to * (1.0 / to.norm());
    const Hit hit = raycast(*w.map, &w, eye, dir, kMaxSenseDistance, filter);
    ++local.target_rays;
    if (hit.kind != t.kind || hit.index != t.index) continue;
    const double pitch_off = rad2deg(std::atan2(to.z, planar)) - me.pitch;
    const int row = nearest_angle_index(kPitchSensorAngles, pitch_off);
    const int col = nearest_angle_index(kYawAngles, yaw_off);
    double& cell = out.at(row, col, t.layer);
    cell = min_or_one(cell, normalized(hit.distance));
  }
  if (stats) *stats = local;
  return out;
}

AudioMatrix sense_audio(const WorldState& w, int id) {
  const PlayerState& me = w.players.at(id);
  AudioMatrix out;
  const Vec3 ear = me.eye();
  for (const GameEvent& e : w.events_this_tick) {
    if (e.emitter == id) continue;
    const double d = (e.source - ear).norm();
    if (d > kMaxSenseDistance) continue;
    const Vec2 rel = e.source.xy() - me.position.xy();
    const double bearing = rel.norm() > 0.0 ? wrap180(heading_deg(rel) - me.yaw) : 0.0;
    const int sector = static_cast<int>(std::floor(wrap360(bearing + 22.5) / 45.0)) % kAudioSectors;
    double& cell = out.at(sector, e.kind);
    cell = std::max(cell, 1.0 - d / kMaxSenseDistance);
  }
  return out;
}

ScalarState sense_scalar(const WorldState& w, int id) {
  const PlayerState& me = w.players.at(id);
  ScalarState s;
  auto& v = s.values;
  auto flag = [](bool b) { return b ? 1.0 : 0.0; };
  v[scalar::kIsAttacking] = flag(me.team == Team::Attacker);
  v[scalar::kIsJumping] = flag(me.is_jumping);
  v[scalar::kIsFalling] = flag(me.is_falling);
  v[scalar::kIsShooting] = flag(me.is_shooting);
  v[scalar::kIsBeingShot] = flag(me.is_being_shot);
  v[scalar::kIsCrouching] = flag(me.is_crouching);
  v[scalar::kHasZero] = flag(me.role == Role::Initiator);
  v[scalar::kHasSkySmoke] = flag(me.role == Role::Controller);
  v[scalar::kHasIncendiary] = flag(me.role == Role::Controller);
  v[scalar::kHasFlash] = flag(me.role == Role::Initiator);
  v[scalar::kMainCooldown] = std::clamp(me.main_cooldown() / 60.0, 0.0, 1.0);
  v[scalar::kSecondaryCooldown] = std::clamp(me.secondary_cooldown() / 60.0, 0.0, 1.0);
  v[scalar::kHealth] = std::clamp(me.health / kMaxHealth, 0.0, 1.0);
  v[scalar::kPitch] = std::clamp((me.pitch + 180.0) / 360.0, 0.0, 1.0);
  v[scalar::kYaw] = std::clamp(me.yaw / 360.0, 0.0, 1.0);
  v[scalar::kReserveAmmo] = std::clamp(me.reserve / 48.0, 0.0, 1.0);
  v[scalar::kMagazineAmmo] = std::clamp(me.magazine / 12.0, 0.0, 1.0);
  v[scalar::kHasBomb] = flag(me.has_bomb);
  bool mate_has = false;
  for (const auto& p : w.players)
    if (p.id != id && p.team == me.team && p.alive && p.has_bomb) mate_has = true;
  v[scalar::kTeammateHasBomb] = flag(mate_has);
  v[scalar::kIsDropping] = flag(me.is_dropping);
  v[scalar::kIsPlanting] = flag(me.is_planting);
  v[scalar::kIsDefusing] = flag(me.is_defusing);
  const bool planted = w.bomb.phase == BombPhase::Planted;
  v[scalar::kBombPlanted] = flag(planted);
  v[scalar::kPlantProgress] = std::clamp(me.plant_progress() / 4.0, 0.0, 1.0);
  v[scalar::kDefuseProgress] = std::clamp(me.defuse_progress() / 7.0, 0.0, 1.0);
  v[scalar::kExplodeTimer] = planted ? std::clamp(w.bomb.fuse_remaining() / 45.0, 0.0, 1.0) : 0.0;
  v[scalar::kTimeLeft] = std::clamp(w.round_time_left() / 120.0, 0.0, 1.0);
  return s;
}

SpatialVector sense_spatial(const WorldState& w, int id) {
  const PlayerState& me = w.players.at(id);
  SpatialVector s;
  auto& v = s.values;
  const Vec2 here = me.position.xy();
  auto fill = [&](int dist_idx, int dir_idx, Vec2 target, bool exists) {
    if (!exists) {
      v[dist_idx] = 1.0;
      v[dir_idx] = 0.0;
      v[dir_idx + 1] = 0.0;
      return;
    }
    const Vec2 d = target - here;
    const double n = d.norm();
    v[dist_idx] = normalized(n);
    if (n > 0.0) {
      v[dir_idx] = d.x / n;
      v[dir_idx + 1] = d.y / n;
    } else {
      v[dir_idx] = 0.0;
      v[dir_idx + 1] = 0.0;
    }
  };

  const PlayerState* mate = nullptr;
  for (const auto& p : w.players)
    if (p.id != id && p.team == me.team) mate = &p;
  fill(spatial::kTeammateDistance, spatial::kTeammateDirX,
       mate ? mate->position.xy() : Vec2{}, mate && mate->alive);
  fill(spatial::kBombsiteDistance, spatial::kBombsiteDirX, w.map->bombsite.center(), true);
  fill(spatial::kBombDistance, spatial::kBombDirX, w.bomb.position.xy(), true);

  double enemy = kMaxSenseDistance;
  for (const auto& p : w.players)
    if (p.alive && p.team != me.team) enemy = std::min(enemy, (p.position.xy() - here).norm());
  double grenade = kMaxSenseDistance;
  for (const auto& g : w.grenades)
    if (g.team != me.team) grenade = std::min(grenade, (g.position.xy() - here).norm());
  v[spatial::kMinEnemyDistance] = normalized(enemy);
  v[spatial::kMinEnemyGrenadeDistance] = normalized(grenade);
  return s;
}

Observation observe(const WorldState& w, int id, VisualStats* stats) {
  if (!w.players.at(id).alive) {
    if (stats) *stats = {};
    return Observation::blank();
  }
  Observation o;
  o.visual = sense_visual(w, id, stats);
  o.audio = sense_audio(w, id);
  o.scalar = sense_scalar(w, id);
  o.spatial = sense_spatial(w, id);
  return o;
}

Observation Observation::blank() { return Observation{}; }

namespace {
template <typename T>
void flatten_into(const Observation& o, std::span<T> out) {
  std::size_t k = 0;
  for (double v : o.visual.values) out[k++] = static_cast<T>(v);
  for (double v : o.audio.values) out[k++] = static_cast<T>(v);
  for (double v : o.scalar.values) out[k++] = static_cast<T>(v);
  for (double v : o.spatial.values) out[k++] = static_cast<T>(v);
}
}  // namespace

void Observation::flatten(std::span<float> out) const { flatten_into(*this, out); }
void Observation::flatten(std::span<double> out) const { flatten_into(*this, out); }

Observation Observation::unflatten(std::span<const float> in) {
  Observation o;
  std::size_t k = 0;
  for (double& v : o.visual.values) v = in[k++];
  for (double& v : o.audio.values) v = in[k++];
  for (double& v : o.scalar.values) v = in[k++];
  for (double& v : o.spatial.values) v = in[k++];
  return o;
}

}  // namespace tacbot
