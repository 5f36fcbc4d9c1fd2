#include "tacbot/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tacbot {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(splitmix64(a) ^ b); }

const char* to_string(AbilityPolicy a) {
  switch (a) {
    case AbilityPolicy::None: return "none";
    case AbilityPolicy::Tactical: return "tactical";
    case AbilityPolicy::Eager: return "eager";
  }
  return "?";
}

void ExpertProfile::validate() const {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("expert profile '" + name + "': " + what);
  };
  if (!(aim_noise_sigma >= 0.0 && aim_noise_sigma <= 30.0)) fail("aim_noise_sigma must be in [0, 30]");
  if (reaction_delay < 0 || reaction_delay > 32) fail("reaction_delay must be in [0, 32]");
  if (!(aggression >= 0.0 && aggression <= 1.0)) fail("aggression must be in [0, 1]");
  if (!(camp_bias >= 0.0 && camp_bias <= 1.0)) fail("camp_bias must be in [0, 1]");
}

void to_json(json& j, const ExpertProfile& p) {
  j = {{"name", p.name},
       {"aim_noise_sigma", p.aim_noise_sigma},
       {"reaction_delay", p.reaction_delay},
       {"aggression", p.aggression},
       {"camp_bias", p.camp_bias},
       {"ability_policy", to_string(p.ability_policy)},
       {"seed", p.seed}};
}

void from_json(const json& j, ExpertProfile& p) {
  static const char* kKeys[] = {"name",      "aim_noise_sigma", "reaction_delay", "aggression",
                                "camp_bias", "ability_policy",  "seed"};
  for (const auto& [key, _] : j.items())
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys))
      throw std::invalid_argument("unknown expert profile key '" + key + "'");
  ExpertProfile d;
  p.name = j.value("name", d.name);
  p.aim_noise_sigma = j.value("aim_noise_sigma", d.aim_noise_sigma);
  p.reaction_delay = j.value("reaction_delay", d.reaction_delay);
  p.aggression = j.value("aggression", d.aggression);
  p.camp_bias = j.value("camp_bias", d.camp_bias);
  p.seed = j.value("seed", d.seed);
  const std::string ab = j.value("ability_policy", std::string(to_string(d.ability_policy)));
  if (ab == "none") p.ability_policy = AbilityPolicy::None;
  else if (ab == "tactical") p.ability_policy = AbilityPolicy::Tactical;
  else if (ab == "eager") p.ability_policy = AbilityPolicy::Eager;
  else throw std::invalid_argument("unknown ability_policy '" + ab + "'");
  p.validate();
}

std::array<ExpertProfile, kNumPlayers> default_roster() {
  return {{
      {"sharp", 1.0, 2, 0.7, 0.3, AbilityPolicy::Tactical, 11},
      {"steady", 2.0, 4, 0.4, 0.6, AbilityPolicy::Tactical, 12},
      {"rusher", 3.0, 3, 0.9, 0.1, AbilityPolicy::Eager, 13},
      {"anchor", 2.5, 5, 0.2, 0.8, AbilityPolicy::None, 14},
  }};
}

double kdr(int kills, int deaths) {
  return static_cast<double>(kills) / static_cast<double>(std::max(deaths, 1));
}

double akdr(int kills, int assists, int deaths) {
  const int total = kills + assists + deaths;
  return total == 0 ? 0.0 : static_cast<double>(kills + assists) / total;
}

Action random_act(std::mt19937_64& rng) {
  Action a;
  a.aim.index = std::uniform_int_distribution<int>(0, kNumAimActions - 1)(rng);
  a.keys.bits = static_cast<std::uint16_t>(rng() & ((1U << kNumKeys) - 1));
  return a;
}

// --- Expert ---------------------------------------------------------------------

namespace {

constexpr double kViewHalfAngle = 60.0;
constexpr double kFireTolerance = 2.0;
constexpr double kWalkTolerance = 30.0;
// Heading error left uncorrected while walking.
constexpr double kSteerDeadband = 2.0;
constexpr int kTrackerStrafeTicks = 12;
constexpr double kTrackerScanYaw = 20.0;
constexpr int kNoiseResample = 8;
constexpr int kChaseMemory = 48;

bool spot_is_clear(const MapGeometry& map, Vec2 p) {
  if (!map.bounds.contains(p)) return false;
  for (const Segment2& s : map.solid)
    if (point_segment_distance(p, s) < kPlayerRadius + 0.3) return false;
  return true;
}

/// Uniform point inside a rectangle shrunk by `margin` that clears all walls.
Vec2 random_clear_point(const MapGeometry& map, const Rect& r, double margin, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(r.min_x + margin, r.max_x - margin);
  std::uniform_real_distribution<double> uy(r.min_y + margin, r.max_y - margin);
  for (int i = 0; i < 64; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    if (spot_is_clear(map, p)) return p;
  }
  return r.center();
}

bool has_line_of_sight(const WorldState& w, const PlayerState& p, const PlayerState& e) {
  const Vec3 eye = p.eye();
  const Vec3 to = e.center() - eye;
  const double dist = to.norm();
  if (dist > kMaxSenseDistance || dist < 1e-9) return false;
  const Hit hit = raycast(*w.map, &w, eye, to * (1.0 / dist), kMaxSenseDistance, RayFilter::vision(p.id));
  return hit.kind == HitKind::Player && hit.index == e.id;
}

}  // namespace

std::vector<int> visible_enemies(const WorldState& w, int id) {
  const PlayerState& p = w.players.at(id);
  std::vector<int> out;
  for (const PlayerState& e : w.players) {
    if (!e.alive || e.team == p.team) continue;
    const double bearing = wrap180(heading_deg(e.position.xy() - p.position.xy()) - p.yaw);
    if (std::abs(bearing) > kViewHalfAngle) continue;
    if (has_line_of_sight(w, p, e)) out.push_back(e.id);
  }
  return out;
}

ExpertState expert_init(const WorldState& w, int id, const ExpertProfile& profile,
                        std::uint64_t round_seed) {
  ExpertState s;
  s.rng.seed(mix_seed(mix_seed(profile.seed, round_seed), static_cast<std::uint64_t>(id)));
  const MapGeometry& map = *w.map;
  const PlayerState& p = w.players.at(id);
  s.site_goal = random_clear_point(map, map.bombsite, 1.0, s.rng);
  s.last_position = p.position.xy();
  if (p.team == Team::Defender) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec2 site = map.bombsite.center();
    if (u(s.rng) < profile.camp_bias || map.waypoints.empty()) {
      s.hold_point = random_clear_point(map, map.bombsite, 1.0, s.rng);
    } else {
      std::vector<Vec2> near;
      for (const Vec2& wp : map.waypoints)
        if ((wp - site).norm() <= 25.0) near.push_back(wp);
      if (near.empty()) near.push_back(site);
      s.hold_point = near[std::uniform_int_distribution<std::size_t>(0, near.size() - 1)(s.rng)];
    }
    s.hold_yaw = heading_deg(map.attacker_spawn.xy() - s.hold_point);
  }
  return s;
}

namespace {

/// Aim action turning from the current view toward (yaw, pitch) offsets.
struct Turn {
  AimAction aim;
  double residual_yaw = 0.0;
  double residual_pitch = 0.0;
};

Turn turn_by(double err_pitch, double err_yaw) {
  Turn t;
  t.aim = angles_to_aim_index(err_pitch, err_yaw);
  const AimAngles applied = aim_index_to_angles(t.aim.index);
  t.residual_yaw = err_yaw - applied.yaw_delta;
  t.residual_pitch = err_pitch - applied.pitch_delta;
  return t;
}

bool main_ready(const PlayerState& p) { return p.main_cooldown_ticks == 0; }
bool secondary_ready(const PlayerState& p) { return p.secondary_cooldown_ticks == 0; }

int choose_target(const WorldState& w, const PlayerState& p, const ExpertProfile& profile,
                  ExpertState& s) {
  const bool blind = inside_enemy_effect(w, p, EffectKind::Flash);
  const std::vector<int> vis = blind ? std::vector<int>{} : visible_enemies(w, p.id);
  for (int e = 0; e < kNumPlayers; ++e)
    s.seen_ticks[e] = std::find(vis.begin(), vis.end(), e) != vis.end() ? s.seen_ticks[e] + 1 : 0;

  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int e : vis) {
    if (s.seen_ticks[e] <= profile.reaction_delay) continue;
    if (e == s.target) return e;
    const double d = (w.players[e].position - p.position).norm();
    if (d < best_d) {
      best_d = d;
      best = e;
    }
  }
  if (best >= 0 || blind || !p.is_being_shot) return best;
  // Under fire with nobody in view: turn toward the nearest enemy with a
  // clear line.
  for (const PlayerState& e : w.players) {
    if (!e.alive || e.team == p.team) continue;
    const double d = (e.position - p.position).norm();
    if (d < best_d && has_line_of_sight(w, p, e)) {
      best_d = d;
      best = e.id;
    }
  }
  return best;
}

Action engage(const WorldState& w, const PlayerState& p, const PlayerState& e,
              const ExpertProfile& profile, ExpertState& s) {
  Action a;
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (s.noise_age % kNoiseResample == 0) {
    s.noise_yaw = profile.aim_noise_sigma * gauss(s.rng);
    s.noise_pitch = 0.5 * profile.aim_noise_sigma * gauss(s.rng);
  }
  ++s.noise_age;
  s.last_seen = e.position.xy();
  s.last_seen_tick = w.tick;

  const Vec3 eye = p.eye();
  const Vec3 to = e.center() - eye;
  const double flat = std::hypot(to.x, to.y);
  const double want_yaw = heading_deg(to.xy());
  const double want_pitch = rad2deg(std::atan2(to.z, flat));
  const Turn t = turn_by(want_pitch - p.pitch + s.noise_pitch, wrap180(want_yaw - p.yaw) + s.noise_yaw);
  a.aim = t.aim;

  KeyAction& k = a.keys;
  const bool aimed = std::abs(t.residual_yaw) < kFireTolerance && std::abs(t.residual_pitch) < kFireTolerance;
  if (p.magazine == 0) {
    if (p.reserve > 0 && p.reload_ticks == 0) k.set(Key::R);
  } else if (aimed) {
    k.set(Key::LeftClick);
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (s.strafe_ticks <= 0) {
    s.strafe_ticks = std::uniform_int_distribution<int>(6, 14)(s.rng);
    s.strafe_left = u(s.rng) < 0.5;
  }
  --s.strafe_ticks;
  if (u(s.rng) < 0.3 + 0.5 * profile.aggression) k.set(s.strafe_left ? Key::A : Key::D);
  if (profile.aggression > 0.6 && flat > 8.0) k.set(Key::W);

  const bool aimed_loose = std::abs(t.residual_yaw) < 5.0;
  switch (profile.ability_policy) {
    case AbilityPolicy::None: break;
    case AbilityPolicy::Tactical:
      if (aimed_loose && flat >= 9.0 && flat <= 15.0 && secondary_ready(p)) k.set(Key::E);
      else if (aimed_loose && p.team == Team::Defender && flat > 15.0 && main_ready(p)) k.set(Key::Q);
      break;
    case AbilityPolicy::Eager:
      if (aimed_loose && secondary_ready(p)) k.set(Key::E);
      else if (aimed_loose && main_ready(p)) k.set(Key::Q);
      break;
  }
  return a;
}

}  // namespace

Action expert_act(const WorldState& w, int id, const ExpertProfile& profile, ExpertState& s) {
  const PlayerState& p = w.players.at(id);
  if (!p.alive) throw std::logic_error("expert_act called for a dead player");
  const MapGeometry& map = *w.map;
  const Vec2 pos = p.position.xy();

  const bool moved = (pos - s.last_position).norm() > 0.05;
  s.last_position = pos;

  s.target = choose_target(w, p, profile, s);
  if (s.target >= 0) return engage(w, p, w.players[s.target], profile, s);
  s.noise_age = 0;

  Action a;
  KeyAction& k = a.keys;
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Objective work in place.
  const BombState& bomb = w.bomb;
  if (p.team == Team::Attacker && p.has_bomb && map.bombsite.contains(pos) &&
      ((pos - s.site_goal).norm() < 1.5 || p.is_planting)) {
    k.set(Key::Key4);
    a.aim = turn_by(-p.pitch, 0.0).aim;
    return a;
  }
  if (p.team == Team::Defender && bomb.phase == BombPhase::Planted &&
      (pos - bomb.position.xy()).norm() <= 1.0) {
    k.set(Key::Key4);
    a.aim = turn_by(-p.pitch, 0.0).aim;
    return a;
  }

  // Where to go, and where to look once there.
  Vec2 goal = pos;
  double look_yaw = p.yaw;
  if (p.team == Team::Attacker) {
    look_yaw = heading_deg(map.defender_spawn.xy() - pos);
    switch (bomb.phase) {
      case BombPhase::Carried:
        goal = s.site_goal;
        break;
      case BombPhase::Dropped:
        goal = bomb.position.xy();
        break;
      case BombPhase::Planted:
        if (!s.planted_guard_set) {
          Rect around{bomb.position.x - 6.0, bomb.position.y - 6.0, bomb.position.x + 6.0,
                      bomb.position.y + 6.0};
          s.hold_point = random_clear_point(map, around, 0.0, s.rng);
          if (!map.clear_path(s.hold_point, bomb.position.xy(), 0.0)) s.hold_point = bomb.position.xy();
          s.planted_guard_set = true;
        }
        goal = s.hold_point;
        break;
      default:
        break;
    }
  } else {
    if (bomb.phase == BombPhase::Planted) {
      goal = bomb.position.xy();
    } else {
      goal = s.hold_point;
      look_yaw = s.hold_yaw;
      if ((pos - s.hold_point).norm() < 1.0 && ++s.hold_ticks > 80 + static_cast<int>(160 * profile.camp_bias) &&
          u(s.rng) > profile.camp_bias) {
        // Patrol to another spot around the site.
        s.hold_ticks = 0;
        const Vec2 site = map.bombsite.center();
        std::vector<Vec2> near;
        for (const Vec2& wp : map.waypoints)
          if ((wp - site).norm() <= 25.0) near.push_back(wp);
        near.push_back(random_clear_point(map, map.bombsite, 1.0, s.rng));
        s.hold_point = near[std::uniform_int_distribution<std::size_t>(0, near.size() - 1)(s.rng)];
        s.hold_yaw = heading_deg(map.attacker_spawn.xy() - s.hold_point);
      }
    }
  }
  const bool carrying = p.has_bomb;
  if (!carrying && w.tick - s.last_seen_tick < kChaseMemory && profile.aggression >= 0.5 &&
      !(p.team == Team::Defender && bomb.phase == BombPhase::Planted))
    goal = s.last_seen;

  const double dist = (goal - pos).norm();
  if (dist > 0.6) {
    const Vec2 target = map.steer_target(pos, goal);
    const double err = wrap180(heading_deg(target - pos) - p.yaw);
    const Turn t = turn_by(-p.pitch, std::abs(err) < kSteerDeadband ? 0.0 : err);
    a.aim = t.aim;
    if (std::abs(t.residual_yaw) < kWalkTolerance) k.set(Key::W);
    s.stuck_ticks = moved ? 0 : s.stuck_ticks + 1;
    if (s.stuck_ticks > 6 && s.unstick_ticks == 0) {
      s.unstick_ticks = 8;
      s.unstick_left = u(s.rng) < 0.5;
    }
    if (s.unstick_ticks > 0) {
      --s.unstick_ticks;
      k.set(s.unstick_left ? Key::A : Key::D);
      if (s.unstick_ticks == 7) k.set(Key::Space);
    }
    // Smoke the approach on the way in.
    if (profile.ability_policy != AbilityPolicy::None && p.team == Team::Attacker && main_ready(p) &&
        !map.bombsite.contains(pos) && (map.bombsite.center() - pos).norm() < 18.0 &&
        std::abs(t.residual_yaw) < 10.0)
      k.set(Key::Q);
  } else {
    s.stuck_ticks = 0;
    if (s.hold_ticks % 24 == 0) s.noise_yaw = std::uniform_real_distribution<double>(-25.0, 25.0)(s.rng);
    if (p.team == Team::Attacker) ++s.hold_ticks;
    a.aim = turn_by(-p.pitch, wrap180(look_yaw + s.noise_yaw - p.yaw)).aim;
  }
  if (p.magazine <= 4 && p.reserve > 0 && p.reload_ticks == 0) k.set(Key::R);
  return a;
}

// --- Drivers ------------------------------------------------------------------

ExpertDriver::ExpertDriver(std::array<ExpertProfile, kNumPlayers> roster) : roster_(std::move(roster)) {
  for (const ExpertProfile& p : roster_) p.validate();
}

void ExpertDriver::begin_round(const WorldState& world, std::uint64_t round_seed) {
  for (int i = 0; i < kNumPlayers; ++i) state_[i] = expert_init(world, i, roster_[i], round_seed);
}

void ExpertDriver::act(const WorldState& world, const std::array<Observation, kNumPlayers>*,
                       std::array<Action, kNumPlayers>& actions) {
  for (int i = 0; i < kNumPlayers; ++i)
    actions[i] = world.players[i].alive ? expert_act(world, i, roster_[i], state_[i]) : Action{};
}

Action tracker_act(const WorldState& w, int player_id) {
  const PlayerState& p = w.players[player_id];
  Action a;
  if (!p.alive) return a;
  const std::vector<int> vis = visible_enemies(w, player_id);
  int target = -1;
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](int e) {
    const double d = (w.players[e].position - p.position).norm();
    if (d < best) {
      best = d;
      target = e;
    }
  };
  for (int e : vis) consider(e);
  KeyAction& k = a.keys;
  if (target < 0) {
    const Vec2 pos = p.position.xy();
    if (w.map->bombsite.contains(pos)) {
      a.aim = turn_by(-p.pitch, kTrackerScanYaw).aim;
      return a;
    }
    const Vec2 next = w.map->steer_target(pos, w.map->bombsite.center());
    const double err = wrap180(heading_deg(next - pos) - p.yaw);
    const Turn t = turn_by(-p.pitch, std::abs(err) < kSteerDeadband ? 0.0 : err);
    a.aim = t.aim;
    if (std::abs(t.residual_yaw) < kWalkTolerance) k.set(Key::W);
    return a;
  }

  const Vec3 to = w.players[target].center() - p.eye();
  const double want_yaw = heading_deg(to.xy());
  const double want_pitch = rad2deg(std::atan2(to.z, std::hypot(to.x, to.y)));
  const Turn t = turn_by(want_pitch - p.pitch, wrap180(want_yaw - p.yaw));
  a.aim = t.aim;
  k.set(((w.tick / kTrackerStrafeTicks) + player_id) % 2 == 0 ? Key::A : Key::D);
  if (p.magazine == 0) {
    if (p.reserve > 0 && p.reload_ticks == 0) k.set(Key::R);
  } else if (std::abs(t.residual_yaw) < kFireTolerance && std::abs(t.residual_pitch) < kFireTolerance) {
    k.set(Key::LeftClick);
  }
  return a;
}

void TrackerDriver::begin_round(const WorldState&, std::uint64_t) {}

void TrackerDriver::act(const WorldState& world, const std::array<Observation, kNumPlayers>*,
                        std::array<Action, kNumPlayers>& actions) {
  for (int i = 0; i < kNumPlayers; ++i) actions[i] = tracker_act(world, i);
}

void RandomDriver::begin_round(const WorldState&, std::uint64_t round_seed) {
  rng_.seed(mix_seed(round_seed, 0x72616e64ULL));
}

void RandomDriver::act(const WorldState& world, const std::array<Observation, kNumPlayers>*,
                       std::array<Action, kNumPlayers>& actions) {
  for (int i = 0; i < kNumPlayers; ++i) {
    const Action a = random_act(rng_);
    actions[i] = world.players[i].alive ? a : Action{};
  }
}

ModelDriver::ModelDriver(const NetworkParams& params, double temperature)
    : params_(to_float(params)), temperature_(temperature) {
  if (!(temperature >= 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("rollout temperature must be finite and non-negative");
  input_.resize(kObservationSize, kNumPlayers);
}

void ModelDriver::begin_round(const WorldState&, std::uint64_t round_seed) {
  hidden_ = zero_hidden<float>(params_.config, kNumPlayers);
  rng_.seed(mix_seed(round_seed, 0x6d6f64656cULL));
}

void ModelDriver::act(const WorldState& world, const std::array<Observation, kNumPlayers>* observations,
                      std::array<Action, kNumPlayers>& actions) {
  if (!observations) throw std::logic_error("ModelDriver needs observations");
  for (int i = 0; i < kNumPlayers; ++i)
    (*observations)[i].flatten(std::span<float>(input_.col(i).data(), kObservationSize));
  forward_step<float>(params_, input_, hidden_, Mode::Infer, nullptr, aim_logits_, key_logits_, &scratch_);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < kNumPlayers; ++i) {
    Action a;
    if (temperature_ == 0.0) {
      int best = 0;
      for (int j = 1; j < kNumAimActions; ++j)
        if (aim_logits_(j, i) > aim_logits_(best, i)) best = j;
      a.aim.index = best;
      for (int k = 0; k < kNumKeys; ++k)
        if (key_logits_(k, i) > 0.0f) a.keys.set(static_cast<Key>(k));
    } else {
      std::array<double, kNumAimActions> w{};
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < kNumAimActions; ++j) mx = std::max(mx, aim_logits_(j, i) / temperature_);
      double total = 0.0;
      for (int j = 0; j < kNumAimActions; ++j) total += w[j] = std::exp(aim_logits_(j, i) / temperature_ - mx);
      double r = u(rng_) * total;
      int pick = kNumAimActions - 1;
      for (int j = 0; j < kNumAimActions; ++j) {
        r -= w[j];
        if (r < 0.0) {
          pick = j;
          break;
        }
      }
      a.aim.index = pick;
      for (int k = 0; k < kNumKeys; ++k) {
        const double prob = 1.0 / (1.0 + std::exp(-key_logits_(k, i) / temperature_));
        if (u(rng_) < prob) a.keys.set(static_cast<Key>(k));
      }
    }
    actions[i] = world.players[i].alive ? a : Action{};
  }
}

// --- Rounds and matches ------------------------------------------------------------

RoundSetup match_round_setup(int round_in_match) {
  return round_in_match % 2 == 0 ? RoundSetup{{0, 1}} : RoundSetup{{2, 3}};
}

namespace {

TickLog log_tick(const WorldState& w, const std::array<Action, kNumPlayers>& actions) {
  TickLog t;
  t.tick = w.tick - 1;  // index of the step just taken
  t.actions = actions;
  for (int i = 0; i < kNumPlayers; ++i) t.players[i] = snapshot(w.players[i]);
  t.events = w.events_this_tick;
  t.kills = w.kills_this_tick;
  t.abilities = w.abilities_this_tick;
  t.objectives = w.objectives_this_tick;
  t.bomb_phase = w.bomb.phase;
  t.bomb_position = w.bomb.position;
  t.round_ticks_left = w.round_ticks_left;
  return t;
}

}  // namespace

void annotate_trajectories(const RoundLog& log, std::vector<Trajectory>& trajectories) {
  const auto counts = tally({log});
  for (Trajectory& t : trajectories) {
    const PlayerTally& c = counts.at(t.meta.player_id);
    t.meta.kills = c.kills;
    t.meta.deaths = c.deaths;
    t.meta.assists = c.assists;
    t.meta.result = log.outcome;
    t.frame_count = log.duration();
  }
}

RoundResult run_round(std::shared_ptr<const MapGeometry> map, const RoundSetup& setup,
                      std::uint64_t seed, Driver& driver, bool record, int round_id, int match_id) {
  RoundResult out;
  WorldState w = new_round(map, setup, seed);
  RoundLog& log = out.log;
  log.round_id = round_id;
  log.match_id = match_id;
  log.seed = seed;
  log.map_name = map->name;
  for (int i = 0; i < kNumPlayers; ++i) {
    log.teams[i] = w.players[i].team;
    log.roles[i] = w.players[i].role;
    log.start[i] = snapshot(w.players[i]);
  }
  if (record) {
    out.trajectories.resize(kNumPlayers);
    for (int i = 0; i < kNumPlayers; ++i) {
      TrajectoryMeta& m = out.trajectories[i].meta;
      m.player_id = i;
      m.team = w.players[i].team;
      m.role = w.players[i].role;
      m.round_id = round_id;
    }
  }
  driver.begin_round(w, seed);

  const bool observing = record || driver.needs_observations();
  auto observations = std::make_unique<std::array<Observation, kNumPlayers>>();
  std::array<Action, kNumPlayers> actions{};
  while (check_round_end(w) == Outcome::Ongoing) {
    if (observing)
      for (int i = 0; i < kNumPlayers; ++i) (*observations)[i] = observe(w, i);
    actions.fill(Action{});
    driver.act(w, observing ? observations.get() : nullptr, actions);
    for (int i = 0; i < kNumPlayers; ++i) {
      if (!w.players[i].alive) {
        actions[i] = Action{};
        continue;
      }
      if (record) out.trajectories[i].push((*observations)[i], actions[i]);
    }
    step(w, actions);
    log.ticks.push_back(log_tick(w, actions));
  }
  log.outcome = check_round_end(w);
  if (record) annotate_trajectories(log, out.trajectories);
  return out;
}

std::vector<Trajectory> replay_round(std::shared_ptr<const MapGeometry> map, const RoundLog& log) {
  RoundSetup setup;
  int n = 0;
  for (int i = 0; i < kNumPlayers; ++i)
    if (log.teams[i] == Team::Attacker) {
      if (n == 2) throw DatasetError("round log lists more than two attackers");
      setup.attackers[n++] = i;
    }
  if (n != 2) throw DatasetError("round log does not list two attackers");
  WorldState w = new_round(map, setup, log.seed);
  std::vector<Trajectory> out(kNumPlayers);
  for (int i = 0; i < kNumPlayers; ++i) {
    if (snapshot(w.players[i]) != log.start[i])
      throw DatasetError("replay of round " + std::to_string(log.round_id) + " starts from a different state");
    out[i].meta = {i, w.players[i].team, w.players[i].role, log.round_id, 0, 0, 0, Outcome::Ongoing};
  }
  for (const TickLog& t : log.ticks) {
    if (check_round_end(w) != Outcome::Ongoing)
      throw DatasetError("replay of round " + std::to_string(log.round_id) + " ended early");
    for (int i = 0; i < kNumPlayers; ++i)
      if (w.players[i].alive) out[i].push(observe(w, i), t.actions[i]);
    step(w, t.actions);
    for (int i = 0; i < kNumPlayers; ++i)
      if (snapshot(w.players[i]) != t.players[i])
        throw DatasetError("replay of round " + std::to_string(log.round_id) + " diverged at tick " +
                           std::to_string(t.tick));
  }
  if (check_round_end(w) != log.outcome)
    throw DatasetError("replay of round " + std::to_string(log.round_id) + " has a different outcome");
  annotate_trajectories(log, out);
  return out;
}

std::array<PlayerTally, kNumPlayers> tally(const std::vector<RoundLog>& rounds) {
  std::array<PlayerTally, kNumPlayers> t{};
  for (const RoundLog& r : rounds)
    for (const TickLog& tick : r.ticks)
      for (const KillRecord& k : tick.kills) {
        if (k.killer >= 0 && k.killer < kNumPlayers) ++t[k.killer].kills;
        if (k.victim >= 0 && k.victim < kNumPlayers) ++t[k.victim].deaths;
        for (int a : k.assisters)
          if (a >= 0 && a < kNumPlayers) ++t[a].assists;
      }
  return t;
}

Dataset run_matches(std::shared_ptr<const MapGeometry> map, Driver& driver, int n_matches,
                    std::uint64_t seed, int rounds_per_match, bool record) {
  if (n_matches < 1) throw std::invalid_argument("n_matches must be at least 1");
  if (rounds_per_match < 1) throw std::invalid_argument("rounds_per_match must be at least 1");
  Dataset d;
  json seeds = json::array();
  for (int m = 0; m < n_matches; ++m)
    for (int r = 0; r < rounds_per_match; ++r) {
      const int round_id = m * rounds_per_match + r;
      const std::uint64_t round_seed = mix_seed(seed, static_cast<std::uint64_t>(round_id));
      seeds.push_back(round_seed);
      RoundResult res = run_round(map, match_round_setup(r), round_seed, driver, record, round_id, m);
      for (Trajectory& t : res.trajectories) d.trajectories.push_back(std::move(t));
      d.rounds.push_back(std::move(res.log));
    }
  d.manifest = {{"format", "tacbot-dataset"},  {"version", 1},
                {"map", map->name},           {"seed", seed},
                {"matches", n_matches},       {"rounds_per_match", rounds_per_match},
                {"tick_rate", kTickRate},     {"round_seeds", seeds}};
  return d;
}

Dataset generate_dataset(int n_matches, const std::array<ExpertProfile, kNumPlayers>& roster,
                         std::shared_ptr<const MapGeometry> map, std::uint64_t seed, int rounds_per_match) {
  ExpertDriver driver(roster);
  Dataset d = run_matches(std::move(map), driver, n_matches, seed, rounds_per_match, true);
  d.manifest["policy"] = "expert";
  d.manifest["roster"] = roster;
  return d;
}

Dataset generate_tracker_dataset(int n_matches, std::shared_ptr<const MapGeometry> map,
                                 std::uint64_t seed, int rounds_per_match) {
  TrackerDriver driver;
  Dataset d = run_matches(std::move(map), driver, n_matches, seed, rounds_per_match, true);
  d.manifest["policy"] = "tracker";
  return d;
}

Dataset model_rollout(const NetworkParams& params, std::shared_ptr<const MapGeometry> map, int n_matches,
                      double temperature, std::uint64_t seed, int rounds_per_match, bool record) {
  if (params.layout.empty() || params.size() != count_params(params.config))
    throw std::invalid_argument("model_rollout: parameters do not match their config");
  ModelDriver driver(params, temperature);
  Dataset d = run_matches(std::move(map), driver, n_matches, seed, rounds_per_match, record);
  d.manifest["policy"] = "model";
  d.manifest["net"] = params.config;
  d.manifest["temperature"] = temperature;
  return d;
}

}  // namespace tacbot
