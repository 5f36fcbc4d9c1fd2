#include "tacbot/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace tacbot {

const char* to_string(Team t) { return t == Team::Attacker ? "attacker" : "defender"; }
const char* to_string(Role r) { return r == Role::Controller ? "controller" : "initiator"; }
const char* to_string(BombPhase p) {
  switch (p) {
    case BombPhase::Carried: return "carried";
    case BombPhase::Dropped: return "dropped";
    case BombPhase::Planted: return "planted";
    case BombPhase::Defused: return "defused";
    case BombPhase::Exploded: return "exploded";
  }
  return "?";
}
const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Footstep: return "footstep";
    case EventKind::Jump: return "jump";
    case EventKind::Shot: return "shot";
    case EventKind::BombBeep: return "bomb_beep";
    case EventKind::GrenadeExplosion: return "grenade_explosion";
    case EventKind::BombDrop: return "bomb_drop";
  }
  return "?";
}
const char* to_string(EffectKind k) {
  switch (k) {
    case EffectKind::Smoke: return "smoke";
    case EffectKind::Fire: return "fire";
    case EffectKind::Flash: return "flash";
    case EffectKind::AbilityBlock: return "ability_block";
  }
  return "?";
}
const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::AttackersWin: return "attackers_win";
    case Outcome::DefendersWin: return "defenders_win";
  }
  return "?";
}

bool WorldState::operator==(const WorldState& o) const {
  return map == o.map && players == o.players && bomb == o.bomb && grenades == o.grenades &&
         effects == o.effects && tick == o.tick && round_ticks_left == o.round_ticks_left &&
         rng_seed == o.rng_seed && events_this_tick == o.events_this_tick &&
         kills_this_tick == o.kills_this_tick && abilities_this_tick == o.abilities_this_tick &&
         objectives_this_tick == o.objectives_this_tick && damage_dealt == o.damage_dealt &&
         fire_intent == o.fire_intent;
}

WorldState new_round(std::shared_ptr<const MapGeometry> map, const RoundSetup& setup,
                     std::uint64_t seed) {
  if (!map) throw std::invalid_argument("new_round: null map");
  WorldState w;
  w.map = std::move(map);
  w.rng_seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.75, 0.75);
  std::uniform_real_distribution<double> yaw_jitter(-15.0, 15.0);

  const Vec2 site = w.map->bombsite.center();
  int attacker_slot = 0, defender_slot = 0;
  for (int id = 0; id < kNumPlayers; ++id) {
    PlayerState& p = w.players[id];
    p.id = id;
    p.role = (id % 2 == 0) ? Role::Controller : Role::Initiator;
    const bool attacking = (id == setup.attackers[0] || id == setup.attackers[1]);
    p.team = attacking ? Team::Attacker : Team::Defender;
    const Vec3 spawn = attacking ? w.map->attacker_spawn : w.map->defender_spawn;
    const int slot = attacking ? attacker_slot++ : defender_slot++;
    const double side = slot == 0 ? -1.0 : 1.0;
    Vec2 pos{spawn.x + jitter(rng), spawn.y + side * 1.5 + jitter(rng)};
    if (!w.map->clear_path(spawn.xy(), pos)) pos = spawn.xy();
    p.position = {pos.x, pos.y, 0.0};
    p.yaw = wrap360(heading_deg(site - pos) + yaw_jitter(rng));
  }
  const int carrier = std::min(setup.attackers[0], setup.attackers[1]);
  w.players[carrier].has_bomb = true;
  w.bomb.phase = BombPhase::Carried;
  w.bomb.carrier = carrier;
  w.bomb.position = w.players[carrier].position;
  return w;
}

// --- Raycasting -----------------------------------------------------------

double ray_cylinder(const Vec3& o, const Vec3& d, Vec2 c, double r, double z0, double z1) {
  double enter = -std::numeric_limits<double>::infinity();
  double exit = std::numeric_limits<double>::infinity();
  // Side (infinite cylinder).
  const double ox = o.x - c.x, oy = o.y - c.y;
  const double a = d.x * d.x + d.y * d.y;
  const double cc = ox * ox + oy * oy - r * r;
  if (a < 1e-18) {
    if (cc > 0.0) return -1.0;
  } else {
    const double b = ox * d.x + oy * d.y;
    const double disc = b * b - a * cc;
    if (disc < 0.0) return -1.0;
    const double s = std::sqrt(disc);
    enter = (-b - s) / a;
    exit = (-b + s) / a;
  }
  // Height slab.
  if (std::abs(d.z) < 1e-18) {
    if (o.z < z0 || o.z > z1) return -1.0;
  } else {
    double t0 = (z0 - o.z) / d.z;
    double t1 = (z1 - o.z) / d.z;
    if (t0 > t1) std::swap(t0, t1);
    enter = std::max(enter, t0);
    exit = std::min(exit, t1);
  }
  if (enter > exit || exit < 0.0) return -1.0;
  return std::max(enter, 0.0);
}

double ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double b = oc.dot(d);
  const double cc = oc.dot(oc) - r * r;
  const double disc = b * b - cc;
  if (disc < 0.0) return -1.0;
  const double s = std::sqrt(disc);
  const double t0 = -b - s;
  const double t1 = -b + s;
  if (t1 < 0.0) return -1.0;
  return std::max(t0, 0.0);
}

Hit raycast(const MapGeometry& map, const WorldState* dyn, const Vec3& o, const Vec3& d,
            double max_dist, const RayFilter& filter) {
  Hit best{HitKind::Miss, max_dist, -1};
  auto consider = [&](double t, HitKind kind, int index) {
    if (t >= 0.0 && t <= max_dist && (best.kind == HitKind::Miss || t < best.distance)) {
      best = {kind, t, index};
    }
  };

  if (d.z < 0.0) {
    const double t = (kFloorZ - o.z) / d.z;
    const Vec2 p{o.x + t * d.x, o.y + t * d.y};
    consider(t, filter.bombsite && map.bombsite.contains(p) ? HitKind::Bombsite : HitKind::Geometry,
             -1);
  } else if (d.z > 0.0) {
    consider((kCeilingZ - o.z) / d.z, HitKind::Geometry, -1);
  }
  const Vec2 o2 = o.xy();
  const Vec2 d2{d.x, d.y};
  for (const auto& w : map.solid) {
    const double t = ray_segment_param(o2, d2, w);
    if (t >= 0.0) consider(t, HitKind::Geometry, -1);
  }

  if (dyn == nullptr) return best;

  if (filter.players) {
    for (const auto& p : dyn->players) {
      if (!p.alive || p.id == filter.ignore_player) continue;
      // Bodies may overlap; a ray starting inside one sees out of it.
      const Vec2 rel = o.xy() - p.position.xy();
      if (rel.norm() < kPlayerRadius && o.z >= p.position.z && o.z <= p.position.z + p.body_height()) continue;
      const double t = ray_cylinder(o, d, p.position.xy(), kPlayerRadius, p.position.z,
                                    p.position.z + p.body_height());
      consider(t, HitKind::Player, p.id);
    }
  }
  if (filter.grenades) {
    for (std::size_t i = 0; i < dyn->grenades.size(); ++i)
      consider(ray_sphere(o, d, dyn->grenades[i].position, kGrenadeRadius), HitKind::Grenade,
               static_cast<int>(i));
  }
  for (std::size_t i = 0; i < dyn->effects.size(); ++i) {
    const AreaEffect& e = dyn->effects[i];
    if (e.kind == EffectKind::Smoke && filter.smoke) {
      consider(ray_cylinder(o, d, e.center.xy(), e.radius, kFloorZ, kCeilingZ), HitKind::Smoke,
               static_cast<int>(i));
    } else if (e.kind == EffectKind::Fire && filter.fire) {
      consider(ray_cylinder(o, d, e.center.xy(), e.radius, kFloorZ, kFireHeight), HitKind::Fire,
               static_cast<int>(i));
    }
  }
  if (filter.bomb &&
      (dyn->bomb.phase == BombPhase::Dropped || dyn->bomb.phase == BombPhase::Planted)) {
    const Vec3 c{dyn->bomb.position.x, dyn->bomb.position.y, kBombCenterZ};
    consider(ray_sphere(o, d, c, kBombRadius),
             dyn->bomb.phase == BombPhase::Dropped ? HitKind::DroppedBomb : HitKind::PlantedBomb,
             -1);
  }
  return best;
}

// --- Stepping -------------------------------------------------------------

namespace {

void emit(WorldState& w, EventKind kind, const Vec3& src, int emitter) {
  w.events_this_tick.push_back({kind, src, emitter, w.tick});
}

bool can_stand_at(const MapGeometry& map, Vec2 from, Vec2 to) {
  return map.clear_path(from, to, kPlayerRadius);
}

void move_player(const MapGeometry& map, PlayerState& p, Vec2 delta) {
  const Vec2 from = p.position.xy();
  Vec2 to = from + delta;
  if (!can_stand_at(map, from, to)) {
    const Vec2 along_x{from.x + delta.x, from.y};
    const Vec2 along_y{from.x, from.y + delta.y};
    if (delta.x != 0.0 && can_stand_at(map, from, along_x)) {
      to = along_x;
    } else if (delta.y != 0.0 && can_stand_at(map, from, along_y)) {
      to = along_y;
    } else {
      return;
    }
  }
  p.position.x = to.x;
  p.position.y = to.y;
}

void drop_bomb(WorldState& w, PlayerState& p, int emitter) {
  p.has_bomb = false;
  w.bomb.phase = BombPhase::Dropped;
  w.bomb.position = {p.position.x, p.position.y, 0.0};
  w.bomb.carrier = -1;
  w.bomb.dropper = p.id;
  w.bomb.drop_tick = w.tick;
  emit(w, EventKind::BombDrop, w.bomb.position, emitter);
}

void throw_grenade(WorldState& w, const PlayerState& p, EffectKind payload) {
  const Vec3 fwd = direction_from_angles(p.yaw, 0.0);
  Grenade g;
  g.owner = p.id;
  g.team = p.team;
  g.payload = payload;
  g.position = {p.position.x, p.position.y, kGrenadeHeight};
  g.velocity = {fwd.x * kGrenadeSpeed, fwd.y * kGrenadeSpeed};
  g.fuse_ticks = kGrenadeFuseTicks;
  w.grenades.push_back(g);
}

void detonate(WorldState& w, const Grenade& g) {
  AreaEffect e;
  e.kind = g.payload;
  e.center = {g.position.x, g.position.y, 0.0};
  e.owner_team = g.team;
  e.owner = g.owner;
  switch (g.payload) {
    case EffectKind::Smoke:
      e.radius = kSmokeRadius;
      e.remaining_ticks = kSmokeTicks;
      break;
    case EffectKind::Fire:
      e.radius = kFireRadius;
      e.remaining_ticks = kFireTicks;
      break;
    case EffectKind::Flash:
      e.radius = kFlashRadius;
      e.remaining_ticks = kFlashTicks;
      break;
    case EffectKind::AbilityBlock:
      e.radius = kBlockRadius;
      e.remaining_ticks = kBlockTicks;
      break;
  }
  w.effects.push_back(e);
  emit(w, EventKind::GrenadeExplosion, g.position, -1);
}

}  // namespace

bool inside_enemy_effect(const WorldState& w, const PlayerState& p, EffectKind kind) {
  for (const auto& e : w.effects) {
    if (e.kind == kind && e.owner_team != p.team &&
        (p.position.xy() - e.center.xy()).norm() <= e.radius)
      return true;
  }
  return false;
}

void apply_action(WorldState& w, int id, const Action& action) {
  PlayerState& p = w.players.at(id);
  if (!p.alive) return;
  const MapGeometry& map = *w.map;

  const AimAngles aim = aim_index_to_angles(action.aim.index);
  p.yaw = wrap360(p.yaw + aim.yaw_delta);
  p.pitch = std::clamp(p.pitch + aim.pitch_delta, -90.0, 90.0);

  const KeyAction& k = action.keys;

  // Plant / defuse with the 4 key; progress resets on release or when the
  // player is not in the required zone.
  p.is_planting = false;
  p.is_defusing = false;
  if (k.pressed(Key::Key4)) {
    if (p.team == Team::Attacker && p.has_bomb && p.grounded() &&
        map.bombsite.contains(p.position.xy())) {
      p.is_planting = true;
      p.defuse_ticks = 0;
      if (++p.plant_ticks >= kPlantTicks) {
        p.has_bomb = false;
        w.bomb.phase = BombPhase::Planted;
        w.bomb.position = {p.position.x, p.position.y, 0.0};
        w.bomb.carrier = -1;
        w.bomb.fuse_ticks = kFuseTicks;
        w.bomb.planted_tick = w.tick;
        w.objectives_this_tick.push_back({ObjectiveKind::Planted, p.id});
        p.plant_ticks = 0;
      }
    } else if (p.team == Team::Defender && w.bomb.phase == BombPhase::Planted && p.grounded() &&
               (p.position.xy() - w.bomb.position.xy()).norm() <= kDefuseRange) {
      p.is_defusing = true;
      p.plant_ticks = 0;
      if (++p.defuse_ticks >= kDefuseTicks) {
        w.bomb.phase = BombPhase::Defused;
        w.objectives_this_tick.push_back({ObjectiveKind::Defused, p.id});
        p.defuse_ticks = 0;
      }
    } else {
      p.plant_ticks = 0;
      p.defuse_ticks = 0;
    }
  } else {
    p.plant_ticks = 0;
    p.defuse_ticks = 0;
  }
  p.is_crouching = p.is_planting || p.is_defusing;

  // Planar movement in the facing frame; rooted while planting/defusing.
  if (!p.is_planting && !p.is_defusing) {
    const double fwd = (k.pressed(Key::W) ? 1.0 : 0.0) - (k.pressed(Key::S) ? 1.0 : 0.0);
    const double left = (k.pressed(Key::A) ? 1.0 : 0.0) - (k.pressed(Key::D) ? 1.0 : 0.0);
    if (fwd != 0.0 || left != 0.0) {
      const double yr = deg2rad(p.yaw);
      Vec2 v{fwd * std::cos(yr) - left * std::sin(yr), fwd * std::sin(yr) + left * std::cos(yr)};
      const double speed = p.is_crouching ? kCrouchSpeed : kRunSpeed;
      v = v * (speed * kDt / v.norm());
      move_player(map, p, v);
    }
  }

  if (k.pressed(Key::Space) && p.grounded() && !p.is_planting && !p.is_defusing) {
    p.vertical_velocity = kJumpVelocity;
    p.is_jumping = true;
    emit(w, EventKind::Jump, p.position, p.id);
  }

  if (k.pressed(Key::G) && p.has_bomb) {
    p.is_dropping = true;
    drop_bomb(w, p, p.id);
  }

  if (k.pressed(Key::R) && p.reload_ticks == 0 && p.magazine < kMagazineSize && p.reserve > 0) {
    const int moved = std::min(kMagazineSize - p.magazine, p.reserve);
    p.magazine += moved;
    p.reserve -= moved;
    p.reload_ticks = kReloadTicks;
  }

  const bool blocked = inside_enemy_effect(w, p, EffectKind::AbilityBlock);
  if (k.pressed(Key::Q) && p.main_cooldown_ticks == 0 && !blocked) {
    throw_grenade(w, p, p.role == Role::Controller ? EffectKind::Smoke : EffectKind::AbilityBlock);
    p.main_cooldown_ticks = kAbilityCooldownTicks;
    w.abilities_this_tick.push_back({p.id, true});
  }
  if (k.pressed(Key::E) && p.secondary_cooldown_ticks == 0 && !blocked) {
    throw_grenade(w, p, p.role == Role::Controller ? EffectKind::Fire : EffectKind::Flash);
    p.secondary_cooldown_ticks = kAbilityCooldownTicks;
    w.abilities_this_tick.push_back({p.id, false});
  }

  w.fire_intent[id] = k.pressed(Key::LeftClick);
}

void step(WorldState& w, const std::array<Action, kNumPlayers>& actions) {
  if (check_round_end(w) != Outcome::Ongoing)
    throw std::logic_error("step called on a terminal world");

  w.events_this_tick.clear();
  w.kills_this_tick.clear();
  w.abilities_this_tick.clear();
  w.objectives_this_tick.clear();
  w.fire_intent.fill(false);
  std::array<Vec2, kNumPlayers> start_xy;
  std::array<bool, kNumPlayers> alive_at_start;
  for (auto& p : w.players) {
    p.is_shooting = false;
    p.is_being_shot = false;
    p.is_dropping = false;
    start_xy[p.id] = p.position.xy();
    alive_at_start[p.id] = p.alive;
  }

  for (int id = 0; id < kNumPlayers; ++id) apply_action(w, id, actions[id]);

  // Vertical motion (exact constant-gravity update).
  for (auto& p : w.players) {
    if (!p.alive || p.grounded()) continue;
    p.position.z += p.vertical_velocity * kDt - 0.5 * kGravity * kDt * kDt;
    p.vertical_velocity -= kGravity * kDt;
    if (p.position.z <= 0.0) {
      p.position.z = 0.0;
      p.vertical_velocity = 0.0;
    }
    p.is_jumping = p.vertical_velocity > 0.0;
    p.is_falling = !p.grounded() && p.vertical_velocity <= 0.0;
  }

  // Shots, resolved against post-movement positions; damage lands together.
  std::array<std::array<double, kNumPlayers>, kNumPlayers> damage{};
  for (auto& shooter : w.players) {
    if (!alive_at_start[shooter.id] || !w.fire_intent[shooter.id]) continue;
    if (shooter.magazine <= 0 || shooter.shot_cooldown_ticks > 0 || shooter.reload_ticks > 0)
      continue;
    shooter.magazine -= 1;
    shooter.shot_cooldown_ticks = kShotIntervalTicks;
    shooter.is_shooting = true;
    const Vec3 eye = shooter.eye();
    emit(w, EventKind::Shot, eye, shooter.id);
    const Hit hit = raycast(*w.map, &w, eye, direction_from_angles(shooter.yaw, shooter.pitch),
                            kMaxSenseDistance, RayFilter::bullet(shooter.id));
    if (hit.kind == HitKind::Player) {
      PlayerState& victim = w.players[hit.index];
      victim.is_being_shot = true;
      if (victim.team != shooter.team) damage[shooter.id][victim.id] += kShotDamage;
    }
  }
  for (const auto& e : w.effects) {
    if (e.kind != EffectKind::Fire) continue;
    for (const auto& p : w.players) {
      if (!p.alive || p.team == e.owner_team) continue;
      if ((p.position.xy() - e.center.xy()).norm() <= e.radius && e.owner >= 0)
        damage[e.owner][p.id] += kFireDps * kDt;
    }
  }
  for (auto& victim : w.players) {
    if (!victim.alive) continue;
    double total = 0.0;
    int killer = -1;
    double killer_damage = 0.0;
    for (int s = 0; s < kNumPlayers; ++s) {
      if (damage[s][victim.id] <= 0.0) continue;
      total += damage[s][victim.id];
      w.damage_dealt[s][victim.id] += damage[s][victim.id];
      if (damage[s][victim.id] > killer_damage) {
        killer_damage = damage[s][victim.id];
        killer = s;
      }
    }
    if (total <= 0.0) continue;
    victim.health = std::max(0.0, victim.health - total);
    if (victim.health <= 0.0) {
      victim.alive = false;
      victim.is_planting = victim.is_defusing = false;
      victim.plant_ticks = victim.defuse_ticks = 0;
      KillRecord kill{killer, victim.id, {}};
      for (int s = 0; s < kNumPlayers; ++s) {
        if (s != killer && w.players[s].team != victim.team && w.damage_dealt[s][victim.id] > 0.0)
          kill.assisters.push_back(s);
      }
      w.kills_this_tick.push_back(kill);
      if (victim.has_bomb) drop_bomb(w, victim, -1);
    }
  }

  // Grenades fly straight and detonate on fuse expiry or wall contact.
  std::vector<Grenade> flying;
  for (auto g : w.grenades) {
    const Vec2 from = g.position.xy();
    Vec2 to = from + g.velocity * kDt;
    bool hit_wall = false;
    const Vec2 travel = to - from;
    const double len = travel.norm();
    if (len > 0.0) {
      for (const auto& s : w.map->solid) {
        const double t = ray_segment_param(from, travel * (1.0 / len), s);
        if (t >= 0.0 && t <= len) {
          to = from + travel * (std::max(0.0, t - 0.05) / len);
          hit_wall = true;
          break;
        }
      }
    }
    g.position.x = to.x;
    g.position.y = to.y;
    if (--g.fuse_ticks <= 0 || hit_wall) {
      detonate(w, g);
    } else {
      flying.push_back(g);
    }
  }
  w.grenades = std::move(flying);

  // Bomb pickup, fuse and beeps.
  if (w.bomb.phase == BombPhase::Dropped) {
    for (auto& p : w.players) {
      if (!p.alive || p.team != Team::Attacker) continue;
      if (p.id == w.bomb.dropper && w.tick - w.bomb.drop_tick < kRepickupDelayTicks) continue;
      if ((p.position.xy() - w.bomb.position.xy()).norm() <= kPickupRange) {
        p.has_bomb = true;
        w.bomb.phase = BombPhase::Carried;
        w.bomb.carrier = p.id;
        break;
      }
    }
  }
  if (w.bomb.phase == BombPhase::Carried && w.bomb.carrier >= 0)
    w.bomb.position = w.players[w.bomb.carrier].position;
  if (w.bomb.phase == BombPhase::Planted && w.bomb.planted_tick != w.tick) {
    if (--w.bomb.fuse_ticks <= 0) {
      w.bomb.fuse_ticks = 0;
      w.bomb.phase = BombPhase::Exploded;
      w.objectives_this_tick.push_back({ObjectiveKind::Exploded, -1});
    } else if ((w.tick - w.bomb.planted_tick) % kBeepIntervalTicks == 0) {
      emit(w, EventKind::BombBeep, {w.bomb.position.x, w.bomb.position.y, kBombCenterZ}, -1);
    }
  }

  // Timers.
  for (auto& e : w.effects) --e.remaining_ticks;
  std::erase_if(w.effects, [](const AreaEffect& e) { return e.remaining_ticks <= 0; });
  for (auto& p : w.players) {
    if (p.main_cooldown_ticks > 0) --p.main_cooldown_ticks;
    if (p.secondary_cooldown_ticks > 0) --p.secondary_cooldown_ticks;
    if (p.shot_cooldown_ticks > 0) --p.shot_cooldown_ticks;
    if (p.reload_ticks > 0) --p.reload_ticks;
  }

  for (const auto& p : w.players) {
    if (!p.alive || p.is_crouching || !p.grounded()) continue;
    if (p.position.xy() != start_xy[p.id]) emit(w, EventKind::Footstep, p.position, p.id);
  }

  ++w.tick;
  if (w.round_ticks_left > 0) --w.round_ticks_left;
}

Outcome check_round_end(const WorldState& w) {
  if (w.bomb.phase == BombPhase::Exploded) return Outcome::AttackersWin;
  if (w.bomb.phase == BombPhase::Defused) return Outcome::DefendersWin;
  bool attackers_alive = false, defenders_alive = false;
  for (const auto& p : w.players) {
    if (!p.alive) continue;
    (p.team == Team::Attacker ? attackers_alive : defenders_alive) = true;
  }
  const bool planted = w.bomb.phase == BombPhase::Planted;
  if (!attackers_alive && !defenders_alive)
    return planted ? Outcome::AttackersWin : Outcome::DefendersWin;
  if (!defenders_alive) return Outcome::AttackersWin;
  if (!attackers_alive && !planted) return Outcome::DefendersWin;
  if (w.round_ticks_left <= 0 && !planted) return Outcome::DefendersWin;
  return Outcome::Ongoing;
}

}  // namespace tacbot
