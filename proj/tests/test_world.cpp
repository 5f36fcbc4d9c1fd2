#include <cmath>
#include <random>

#include "doctest.h"
#include "tacbot/world.hpp"
#include "test_support.hpp"

using namespace tacbot;
using namespace tacbot::testing;

namespace {

Action press(std::initializer_list<Key> keys, int aim = kNoOpAimIndex) {
  Action a;
  a.aim.index = aim;
  for (Key k : keys) a.keys.set(k);
  return a;
}

std::array<Action, kNumPlayers> random_actions(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> aim(0, kNumAimActions - 1);
  std::bernoulli_distribution coin(0.5);
  std::array<Action, kNumPlayers> out;
  for (auto& a : out) {
    a.aim.index = aim(rng);
    for (int k = 0; k < kNumKeys; ++k) a.keys.set(static_cast<Key>(k), coin(rng));
  }
  return out;
}

int count_events(const WorldState& w, EventKind kind) {
  int n = 0;
  for (const auto& e : w.events_this_tick) n += e.kind == kind;
  return n;
}

// Distance to the first face of the box [0,W]x[0,H]x[0,3] hit from inside.
double box_oracle(double W, double H, Vec3 o, Vec3 d) {
  double best = std::numeric_limits<double>::infinity();
  auto plane = [&](double origin, double dir, double lo, double hi) {
    if (dir > 0) best = std::min(best, (hi - origin) / dir);
    if (dir < 0) best = std::min(best, (lo - origin) / dir);
  };
  plane(o.x, d.x, 0.0, W);
  plane(o.y, d.y, 0.0, H);
  plane(o.z, d.z, 0.0, 3.0);
  return best;
}

}  // namespace

TEST_CASE("raycast: perpendicular wall 50 m ahead") {
  auto map = room_map(60, 40);
  const Hit h = raycast(*map, nullptr, {10, 20, 1.6}, {1, 0, 0});
  CHECK(h.kind == HitKind::Geometry);
  CHECK(h.distance == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("raycast: open field at level pitch misses") {
  auto map = room_map(400, 400);
  const Hit h = raycast(*map, nullptr, {200, 200, 1.6}, {1, 0, 0});
  CHECK(h.kind == HitKind::Miss);
  CHECK(h.distance == 100.0);
}

TEST_CASE("raycast: pitch -45 from eye height hits the floor at 1.6 sqrt 2") {
  auto map = room_map(400, 400);
  const Hit h = raycast(*map, nullptr, {200, 200, 1.6}, direction_from_angles(30.0, -45.0));
  CHECK(h.kind == HitKind::Geometry);
  CHECK(h.distance == doctest::Approx(1.6 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("raycast matches the analytic axis-aligned room oracle") {
  const double W = 37.5, H = 23.25;
  auto map = room_map(W, H);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(0.5, W - 0.5), uy(0.5, H - 0.5), uz(0.1, 2.9);
  std::uniform_real_distribution<double> yaw(0, 360), pitch(-89, 89);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 o{ux(rng), uy(rng), uz(rng)};
    const Vec3 d = direction_from_angles(yaw(rng), pitch(rng));
    const double expect = box_oracle(W, H, o, d);
    const Hit h = raycast(*map, nullptr, o, d);
    REQUIRE(expect < 100.0);
    CHECK(h.kind != HitKind::Miss);
    CHECK(std::abs(h.distance - expect) <= 1e-9 * expect);
  }
}

TEST_CASE("raycast stops on players, smoke and the bombsite floor") {
  auto map = room_map(60, 40);
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {30, 20, 0}, {58, 2, 0});
  Hit h = raycast(*map, &w, w.players[0].eye(), {1, 0, 0}, 100, RayFilter::vision(0));
  CHECK(h.kind == HitKind::Player);
  CHECK(h.index == 2);
  CHECK(h.distance == doctest::Approx(20.0 - kPlayerRadius));

  // A teammate standing on top of the viewer does not blind them.
  w.players[1].position = w.players[0].position;
  h = raycast(*map, &w, w.players[0].eye(), {1, 0, 0}, 100, RayFilter::vision(0));
  CHECK(h.kind == HitKind::Player);
  CHECK(h.index == 2);
  w.players[1].position = {2, 2, 0};

  w.effects.push_back({EffectKind::Smoke, {20, 20, 0}, 4.0, 10, Team::Defender, 2});
  h = raycast(*map, &w, w.players[0].eye(), {1, 0, 0}, 100, RayFilter::vision(0));
  CHECK(h.kind == HitKind::Smoke);
  CHECK(h.distance == doctest::Approx(6.0));
  // Bullets pass through smoke.
  h = raycast(*map, &w, w.players[0].eye(), {1, 0, 0}, 100, RayFilter::bullet(0));
  CHECK(h.kind == HitKind::Player);

  // Looking straight down from inside the bombsite.
  h = raycast(*map, nullptr, {3, 37, 1.6}, {0, 0, -1});
  CHECK(h.kind == HitKind::Bombsite);
  CHECK(h.distance == doctest::Approx(1.6));
}

TEST_CASE("no-op step leaves positions and advances the clock one tick") {
  WorldState w = new_round(shipped(), {}, 42);
  const auto before = w.players;
  const double t0 = w.round_time_left();
  step(w, noops());
  for (int i = 0; i < kNumPlayers; ++i) CHECK(w.players[i].position == before[i].position);
  CHECK(w.round_time_left() == doctest::Approx(t0 - 1.0 / 16.0));
  CHECK(w.tick == 1);
  CHECK(w.events_this_tick.empty());
}

TEST_CASE("holding 4 in the bombsite for 64 ticks plants the bomb") {
  auto map = room_map();
  WorldState w = place(map, {3, 37, 0}, {2, 20, 0}, {38, 38, 0}, {38, 30, 0});
  auto acts = noops();
  acts[0] = press({Key::Key4});
  for (int t = 0; t < 63; ++t) step(w, acts);
  CHECK(w.bomb.phase == BombPhase::Carried);
  CHECK(w.players[0].plant_progress() == doctest::Approx(63.0 / 16.0));
  CHECK(w.players[0].is_crouching);
  step(w, acts);
  CHECK(w.bomb.phase == BombPhase::Planted);
  CHECK_FALSE(w.players[0].has_bomb);
  REQUIRE(w.objectives_this_tick.size() == 1);
  CHECK(w.objectives_this_tick[0].kind == ObjectiveKind::Planted);
}

TEST_CASE("releasing 4 after 63 ticks resets plant progress") {
  auto map = room_map();
  WorldState w = place(map, {3, 37, 0}, {2, 20, 0}, {38, 38, 0}, {38, 30, 0});
  auto acts = noops();
  acts[0] = press({Key::Key4});
  for (int t = 0; t < 63; ++t) step(w, acts);
  step(w, noops());
  CHECK(w.players[0].plant_progress() == 0.0);
  acts[0] = press({Key::Key4});
  step(w, acts);
  CHECK(w.bomb.phase == BombPhase::Carried);
}

TEST_CASE("planting outside the bombsite does nothing") {
  auto map = room_map();
  WorldState w = place(map, {20, 20, 0}, {2, 20, 0}, {38, 38, 0}, {38, 30, 0});
  auto acts = noops();
  acts[0] = press({Key::Key4});
  for (int t = 0; t < 80; ++t) step(w, acts);
  CHECK(w.bomb.phase == BombPhase::Carried);
  CHECK(w.players[0].plant_ticks == 0);
}

TEST_CASE("defusing takes 112 ticks within 1.5 m of the bomb") {
  auto map = room_map();
  WorldState w = place(map, {3, 37, 0}, {2, 20, 0}, {4, 36, 0}, {38, 30, 0});
  auto acts = noops();
  acts[0] = press({Key::Key4});
  for (int t = 0; t < 64; ++t) step(w, acts);
  REQUIRE(w.bomb.phase == BombPhase::Planted);
  acts = noops();
  acts[2] = press({Key::Key4});
  for (int t = 0; t < 111; ++t) step(w, acts);
  CHECK(w.bomb.phase == BombPhase::Planted);
  step(w, acts);
  CHECK(w.bomb.phase == BombPhase::Defused);
  CHECK(check_round_end(w) == Outcome::DefendersWin);
  CHECK_THROWS_AS(step(w, noops()), std::logic_error);
}

TEST_CASE("planted bomb beeps every 16 ticks and explodes after 720") {
  auto map = room_map();
  WorldState w = place(map, {3, 37, 0}, {2, 20, 0}, {38, 38, 0}, {38, 30, 0});
  auto acts = noops();
  acts[0] = press({Key::Key4});
  for (int t = 0; t < 64; ++t) step(w, acts);
  REQUIRE(w.bomb.phase == BombPhase::Planted);
  int beeps = 0, ticks = 0;
  while (check_round_end(w) == Outcome::Ongoing) {
    step(w, noops());
    ++ticks;
    beeps += count_events(w, EventKind::BombBeep);
    CHECK(w.round_time_left() >= 0.0);
  }
  CHECK(ticks == kFuseTicks);
  CHECK(beeps == kFuseTicks / 16 - 1);
  CHECK(w.bomb.phase == BombPhase::Exploded);
  CHECK(check_round_end(w) == Outcome::AttackersWin);
}

TEST_CASE("firing with an empty magazine produces nothing") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {20, 20, 0}, {38, 2, 0});
  w.players[0].magazine = 0;
  auto acts = noops();
  acts[0] = press({Key::LeftClick});
  step(w, acts);
  CHECK(count_events(w, EventKind::Shot) == 0);
  CHECK(w.players[2].health == kMaxHealth);
}

TEST_CASE("four hits kill; kill credit and bomb drop") {
  auto map = room_map();
  // Defender 2 shoots attacker 0 (the carrier) from across the room.
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {20, 20, 0}, {38, 2, 0});
  w.players[2].yaw = 180.0;
  w.players[3].yaw = heading_deg(Vec2{10, 20} - Vec2{38, 2});
  auto acts = noops();
  acts[2] = press({Key::LeftClick});
  acts[3] = press({Key::LeftClick});
  std::vector<KillRecord> kills;
  int shots = 0;
  for (int t = 0; t < 20 && w.players[0].alive; ++t) {
    step(w, acts);
    shots += count_events(w, EventKind::Shot);
    for (const auto& k : w.kills_this_tick) kills.push_back(k);
  }
  CHECK_FALSE(w.players[0].alive);
  CHECK(w.players[0].health == 0.0);
  REQUIRE(kills.size() == 1);
  CHECK(kills[0].victim == 0);
  CHECK((kills[0].killer == 2 || kills[0].killer == 3));
  CHECK(kills[0].assisters.size() == 1);
  CHECK(w.bomb.phase == BombPhase::Dropped);
  CHECK(count_events(w, EventKind::BombDrop) == 1);
  CHECK(shots >= 4);
}

TEST_CASE("simultaneous lethal shots kill both players") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {20, 20, 0}, {38, 2, 0});
  w.players[2].yaw = 180.0;
  w.players[0].health = 20;
  w.players[2].health = 20;
  auto acts = noops();
  acts[0] = press({Key::LeftClick});
  acts[2] = press({Key::LeftClick});
  step(w, acts);
  CHECK_FALSE(w.players[0].alive);
  CHECK_FALSE(w.players[2].alive);
  CHECK(w.kills_this_tick.size() == 2);
}

TEST_CASE("reload transfers min(12 - magazine, reserve)") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {38, 38, 0}, {38, 2, 0});
  w.players[0].magazine = 3;
  w.players[0].reserve = 5;
  auto acts = noops();
  acts[0] = press({Key::R});
  step(w, acts);
  CHECK(w.players[0].magazine == 8);
  CHECK(w.players[0].reserve == 0);
  // Locked out of firing while reloading.
  acts[0] = press({Key::LeftClick});
  step(w, acts);
  CHECK(count_events(w, EventKind::Shot) == 0);
}

TEST_CASE("jump follows the sampled ballistic arc") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {38, 38, 0}, {38, 2, 0});
  auto acts = noops();
  acts[0] = press({Key::Space});
  step(w, acts);
  CHECK(count_events(w, EventKind::Jump) == 1);
  double apex = w.players[0].position.z;
  int airborne = 1;
  while (!w.players[0].grounded()) {
    step(w, noops());
    apex = std::max(apex, w.players[0].position.z);
    ++airborne;
    REQUIRE(airborne < 100);
  }
  // Oracle: z(t) = v t - g t^2 / 2 sampled at t = k / 16; the continuous
  // arc peaks at 0.9 m (t = 0.6 s) and returns to the floor at t = 1.2 s.
  double sampled_apex = 0.0;
  int landing = 0;
  for (int k = 1; landing == 0; ++k) {
    const double t = k / 16.0;
    const double z = kJumpVelocity * t - 0.5 * kGravity * t * t;
    if (z <= 0.0) landing = k;
    else sampled_apex = std::max(sampled_apex, z);
  }
  CHECK(kJumpVelocity * 0.6 - 0.5 * kGravity * 0.36 == doctest::Approx(kJumpApex));
  CHECK(apex == doctest::Approx(sampled_apex).epsilon(1e-12));
  CHECK(airborne == landing);
}

TEST_CASE("walking emits footsteps at run speed; walls stop movement") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {38, 38, 0}, {38, 2, 0});
  auto acts = noops();
  acts[0] = press({Key::W});
  step(w, acts);
  CHECK(w.players[0].position.x == doctest::Approx(10 + kRunSpeed / 16));
  CHECK(count_events(w, EventKind::Footstep) == 1);
  for (int t = 0; t < 200; ++t) step(w, acts);
  CHECK(w.players[0].position.x <= 40 - kPlayerRadius + 1e-9);
}

TEST_CASE("abilities: smoke and fire effects, cooldowns, ability block") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {25, 20, 0}, {38, 2, 0});
  auto acts = noops();
  acts[0] = press({Key::E});  // controller incendiary, lands 12 m ahead
  step(w, acts);
  CHECK(w.players[0].secondary_cooldown() == doctest::Approx(60.0 - 1.0 / 16));
  CHECK(w.abilities_this_tick.size() == 1);
  for (int t = 0; t < kGrenadeFuseTicks - 1; ++t) step(w, noops());
  CHECK(count_events(w, EventKind::GrenadeExplosion) == 1);
  REQUIRE(w.effects.size() == 1);
  CHECK(w.effects[0].kind == EffectKind::Fire);
  CHECK(w.effects[0].center.x == doctest::Approx(22.0));
  // The defender at 25 m stands inside the 3 m fire.
  step(w, noops());
  CHECK(w.players[2].health == doctest::Approx(100.0 - 10.0 / 16));

  // An enemy ability block stops Q.
  w.effects.push_back({EffectKind::AbilityBlock, {10, 20, 0}, 4.0, 10, Team::Defender, 3});
  acts[0] = press({Key::Q});
  step(w, acts);
  CHECK(w.abilities_this_tick.empty());
  CHECK(w.players[0].main_cooldown_ticks == 0);
}

TEST_CASE("dropped bomb is picked up by a teammate but not instantly by the dropper") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {10.5, 20, 0}, {38, 38, 0}, {38, 2, 0});
  w.players[1].position = {30, 30, 0};
  auto acts = noops();
  acts[0] = press({Key::G});
  step(w, acts);
  CHECK(w.bomb.phase == BombPhase::Dropped);
  CHECK(w.players[0].is_dropping);
  step(w, noops());
  CHECK(w.bomb.phase == BombPhase::Dropped);
  w.players[1].position = {10.5, 20, 0};
  step(w, noops());
  CHECK(w.bomb.phase == BombPhase::Carried);
  CHECK(w.bomb.carrier == 1);
  CHECK(w.players[1].has_bomb);
}

TEST_CASE("check_round_end agrees with the rule table") {
  // Rule table written out from the round rules: a row per bomb phase,
  // alive counts and timer.
  auto expected = [](BombPhase phase, int att, int def, bool time_up) {
    if (phase == BombPhase::Exploded) return Outcome::AttackersWin;
    if (phase == BombPhase::Defused) return Outcome::DefendersWin;
    const bool planted = phase == BombPhase::Planted;
    if (def == 0 && att > 0) return Outcome::AttackersWin;
    if (def == 0 && att == 0) return planted ? Outcome::AttackersWin : Outcome::DefendersWin;
    if (att == 0) return planted ? Outcome::Ongoing : Outcome::DefendersWin;
    if (time_up) return planted ? Outcome::Ongoing : Outcome::DefendersWin;
    return Outcome::Ongoing;
  };
  auto map = room_map();
  const BombPhase phases[] = {BombPhase::Carried, BombPhase::Dropped, BombPhase::Planted,
                              BombPhase::Defused, BombPhase::Exploded};
  int rows = 0;
  for (BombPhase phase : phases) {
    for (int mask = 0; mask < 16; ++mask) {
      for (bool time_up : {false, true}) {
        WorldState w = place(map, {3, 3, 0}, {4, 4, 0}, {30, 30, 0}, {31, 31, 0});
        w.bomb.phase = phase;
        for (int i = 0; i < 4; ++i) w.players[i].alive = (mask >> i) & 1;
        w.round_ticks_left = time_up ? 0 : 100;
        const int att = ((mask >> 0) & 1) + ((mask >> 1) & 1);
        const int def = ((mask >> 2) & 1) + ((mask >> 3) & 1);
        CHECK(check_round_end(w) == expected(phase, att, def, time_up));
        ++rows;
      }
    }
  }
  CHECK(rows == 160);
}

TEST_CASE("round end: exploded, timer expiry, attackers dead after plant") {
  auto map = room_map();
  WorldState w = place(map, {3, 3, 0}, {4, 4, 0}, {30, 30, 0}, {31, 31, 0});
  w.bomb.phase = BombPhase::Exploded;
  CHECK(check_round_end(w) == Outcome::AttackersWin);
  w.bomb.phase = BombPhase::Carried;
  w.round_ticks_left = 0;
  CHECK(check_round_end(w) == Outcome::DefendersWin);
  w.round_ticks_left = 100;
  w.bomb.phase = BombPhase::Planted;
  w.players[0].alive = w.players[1].alive = false;
  CHECK(check_round_end(w) == Outcome::Ongoing);
}

TEST_CASE("property: random play is deterministic, bounded and terminates") {
  auto map = shipped();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    WorldState a = new_round(map, {}, seed);
    WorldState b = new_round(map, {}, seed);
    std::mt19937_64 rng(seed * 977);
    int ticks = 0;
    while (check_round_end(a) == Outcome::Ongoing) {
      const auto acts = random_actions(rng);
      std::array<int, kNumPlayers> mag, total;
      for (const auto& p : a.players) {
        mag[p.id] = p.magazine;
        total[p.id] = p.magazine + p.reserve;
      }
      step(a, acts);
      step(b, acts);
      REQUIRE(a == b);
      ++ticks;
      for (const auto& p : a.players) {
        CHECK(p.health >= 0.0);
        CHECK(p.health <= kMaxHealth);
        CHECK(p.pitch >= -90.0);
        CHECK(p.pitch <= 90.0);
        CHECK(p.yaw >= 0.0);
        CHECK(p.yaw < 360.0);
        CHECK(p.magazine >= 0);
        CHECK(p.magazine <= kMagazineSize);
        CHECK(p.magazine + p.reserve <= total[p.id]);
        int shots = 0;
        for (const auto& e : a.events_this_tick) shots += e.kind == EventKind::Shot && e.emitter == p.id;
        // Each shot is exactly one round out of the magazine (reload can
        // only add rounds, and reload locks out firing).
        if (shots > 0) CHECK(p.magazine == mag[p.id] - shots);
        CHECK(shots <= 1);
        if (!p.alive) {
          for (const auto& e : a.events_this_tick)
            if (e.emitter == p.id) CHECK(e.kind != EventKind::Footstep);
        }
      }
      REQUIRE(ticks <= kMaxRoundTicks);
    }
  }
}

TEST_CASE("property: dead players take no actions") {
  auto map = room_map();
  WorldState w = place(map, {10, 20, 0}, {2, 2, 0}, {38, 38, 0}, {38, 2, 0});
  w.players[1].alive = false;
  const Vec3 pos = w.players[1].position;
  auto acts = noops();
  acts[1] = press({Key::W, Key::Space, Key::LeftClick, Key::Q}, 0);
  step(w, acts);
  CHECK(w.players[1].position == pos);
  CHECK(w.events_this_tick.empty());
  CHECK(w.abilities_this_tick.empty());
}
