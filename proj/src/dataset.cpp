#include "tacbot/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

namespace tacbot {

namespace fs = std::filesystem;
using nlohmann::json;

PlayerSnapshot snapshot(const PlayerState& p) {
  PlayerSnapshot s;
  s.position = p.position;
  s.yaw = p.yaw;
  s.pitch = p.pitch;
  s.health = p.health;
  s.magazine = p.magazine;
  s.reserve = p.reserve;
  s.alive = p.alive;
  s.has_bomb = p.has_bomb;
  s.is_planting = p.is_planting;
  s.is_defusing = p.is_defusing;
  return s;
}

namespace {

json vec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json player_json(const PlayerSnapshot& s) {
  json j = {{"pos", vec(s.position)}, {"yaw", s.yaw},           {"pitch", s.pitch},
            {"hp", s.health},         {"mag", s.magazine},       {"reserve", s.reserve},
            {"alive", s.alive}};
  if (s.has_bomb) j["bomb"] = true;
  if (s.is_planting) j["planting"] = true;
  if (s.is_defusing) j["defusing"] = true;
  return j;
}

PlayerSnapshot player_from(const json& j) {
  PlayerSnapshot s;
  s.position = vec(j.at("pos"));
  s.yaw = j.at("yaw").get<double>();
  s.pitch = j.at("pitch").get<double>();
  s.health = j.at("hp").get<double>();
  s.magazine = j.at("mag").get<int>();
  s.reserve = j.at("reserve").get<int>();
  s.alive = j.at("alive").get<bool>();
  s.has_bomb = j.value("bomb", false);
  s.is_planting = j.value("planting", false);
  s.is_defusing = j.value("defusing", false);
  return s;
}

json tick_json(const TickLog& t) {
  json actions = json::array();
  for (const Action& a : t.actions) actions.push_back(json::array({a.aim.index, a.keys.bits}));
  json players = json::array();
  for (const PlayerSnapshot& p : t.players) players.push_back(player_json(p));
  json events = json::array();
  for (const GameEvent& e : t.events)
    events.push_back({{"kind", to_string(e.kind)}, {"pos", vec(e.source)}, {"emitter", e.emitter}});
  json kills = json::array();
  for (const KillRecord& k : t.kills)
    kills.push_back({{"killer", k.killer}, {"victim", k.victim}, {"assisters", k.assisters}});
  json abilities = json::array();
  for (const AbilityUse& a : t.abilities)
    abilities.push_back({{"player", a.player}, {"slot", a.main ? "main" : "secondary"}});
  json objectives = json::array();
  for (const ObjectiveEvent& o : t.objectives) {
    const char* kind = o.kind == ObjectiveKind::Planted   ? "planted"
                       : o.kind == ObjectiveKind::Defused ? "defused"
                                                          : "exploded";
    objectives.push_back({{"kind", kind}, {"player", o.player}});
  }
  return {{"type", "tick"},
          {"tick", t.tick},
          {"actions", actions},
          {"players", players},
          {"events", events},
          {"kills", kills},
          {"abilities", abilities},
          {"objectives", objectives},
          {"bomb", {{"phase", to_string(t.bomb_phase)}, {"pos", vec(t.bomb_position)}}},
          {"ticks_left", t.round_ticks_left}};
}

template <typename E, int N>
E enum_from(const std::string& s, const char* what) {
  for (int i = 0; i < N; ++i)
    if (s == to_string(static_cast<E>(i))) return static_cast<E>(i);
  throw DatasetError(std::string("unknown ") + what + " '" + s + "'");
}

TickLog tick_from(const json& j) {
  TickLog t;
  t.tick = j.at("tick").get<std::int64_t>();
  const json& actions = j.at("actions");
  const json& players = j.at("players");
  if (actions.size() != kNumPlayers || players.size() != kNumPlayers)
    throw DatasetError("tick " + std::to_string(t.tick) + " does not list 4 players");
  for (int i = 0; i < kNumPlayers; ++i) {
    t.actions[i].aim.index = actions[i].at(0).get<int>();
    t.actions[i].keys.bits = actions[i].at(1).get<std::uint16_t>();
    t.players[i] = player_from(players[i]);
  }
  for (const json& e : j.at("events"))
    t.events.push_back({enum_from<EventKind, kNumEventKinds>(e.at("kind").get<std::string>(), "event"),
                        vec(e.at("pos")), e.at("emitter").get<int>(), t.tick});
  for (const json& k : j.at("kills"))
    t.kills.push_back({k.at("killer").get<int>(), k.at("victim").get<int>(),
                       k.at("assisters").get<std::vector<int>>()});
  for (const json& a : j.at("abilities"))
    t.abilities.push_back({a.at("player").get<int>(), a.at("slot").get<std::string>() == "main"});
  for (const json& o : j.at("objectives")) {
    const std::string kind = o.at("kind").get<std::string>();
    ObjectiveKind k = kind == "planted"   ? ObjectiveKind::Planted
                      : kind == "defused" ? ObjectiveKind::Defused
                      : kind == "exploded"
                          ? ObjectiveKind::Exploded
                          : throw DatasetError("unknown objective '" + kind + "'");
    t.objectives.push_back({k, o.at("player").get<int>()});
  }
  t.bomb_phase = enum_from<BombPhase, 5>(j.at("bomb").at("phase").get<std::string>(), "bomb phase");
  t.bomb_position = vec(j.at("bomb").at("pos"));
  t.round_ticks_left = j.at("ticks_left").get<int>();
  return t;
}

}  // namespace

void write_match_log(const std::vector<RoundLog>& rounds, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  for (const RoundLog& r : rounds) {
    json teams = json::array(), roles = json::array(), start = json::array();
    for (int i = 0; i < kNumPlayers; ++i) {
      teams.push_back(to_string(r.teams[i]));
      roles.push_back(to_string(r.roles[i]));
      start.push_back(player_json(r.start[i]));
    }
    out << json{{"type", "round_start"}, {"round", r.round_id}, {"match", r.match_id},
                {"seed", r.seed},        {"map", r.map_name},   {"teams", teams},
                {"roles", roles},        {"players", start}}
               .dump()
        << '\n';
    for (const TickLog& t : r.ticks) out << tick_json(t).dump() << '\n';
    out << json{{"type", "round_end"}, {"round", r.round_id}, {"outcome", to_string(r.outcome)},
                {"duration", r.duration()}}
               .dump()
        << '\n';
  }
  if (!out) throw DatasetError("failed writing " + path.string());
}

std::vector<RoundLog> parse_match_log(std::istream& in) {
  std::vector<RoundLog> rounds;
  RoundLog* open = nullptr;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "round_start") {
        if (open) throw DatasetError("round_start inside an open round");
        RoundLog& r = rounds.emplace_back();
        r.round_id = j.at("round").get<int>();
        r.match_id = j.at("match").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.map_name = j.at("map").get<std::string>();
        for (int i = 0; i < kNumPlayers; ++i) {
          r.teams[i] = enum_from<Team, 2>(j.at("teams").at(i).get<std::string>(), "team");
          r.roles[i] = enum_from<Role, 2>(j.at("roles").at(i).get<std::string>(), "role");
          r.start[i] = player_from(j.at("players").at(i));
        }
        open = &r;
      } else if (type == "tick") {
        if (!open) throw DatasetError("tick outside a round");
        open->ticks.push_back(tick_from(j));
      } else if (type == "round_end") {
        if (!open) throw DatasetError("round_end without round_start");
        open->outcome = enum_from<Outcome, 3>(j.at("outcome").get<std::string>(), "outcome");
        if (j.at("duration").get<int>() != open->duration())
          throw DatasetError("round_end duration does not match the tick count");
        open = nullptr;
      } else {
        throw DatasetError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw DatasetError("match log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError("match log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (open) throw DatasetError("match log ends inside a round");
  return rounds;
}

std::vector<RoundLog> read_match_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open match log " + path.string());
  return parse_match_log(in);
}

// --- Trajectories ---------------------------------------------------------------

void Trajectory::push(const Observation& o, const Action& a) {
  const std::size_t at = observations.size();
  observations.resize(at + kObservationSize);
  o.flatten(std::span<float>(observations.data() + at, kObservationSize));
  actions.push_back(a);
}

namespace {

constexpr char kTrajMagic[4] = {'T', 'B', 'T', 'R'};
constexpr std::uint32_t kTrajVersion = 1;
constexpr std::uint32_t kDims[7] = {kGrid, kGrid, kVisualLayers, kAudioSectors, kAudioTypes,
                                    kScalarDim, kSpatialDim};

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const fs::path& path) {
  V v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V)))
    throw DatasetError("trajectory " + path.string() + " is truncated");
  return v;
}

}  // namespace

void write_trajectory(const Trajectory& t, const fs::path& path) {
  if (t.observations.size() != static_cast<std::size_t>(t.alive_frames()) * kObservationSize)
    throw DatasetError("trajectory observation buffer does not match its action count");
  if (t.alive_frames() > t.frame_count) throw DatasetError("alive frames exceed frame count");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  out.write(kTrajMagic, 4);
  put<std::uint32_t>(out, kTrajVersion);
  put<std::uint32_t>(out, kTickRate);
  for (std::uint32_t d : kDims) put(out, d);
  put<std::int32_t>(out, t.meta.player_id);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.meta.team));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.meta.role));
  put<std::int32_t>(out, t.meta.round_id);
  put<std::int32_t>(out, t.meta.kills);
  put<std::int32_t>(out, t.meta.deaths);
  put<std::int32_t>(out, t.meta.assists);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.meta.result));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.frame_count));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.alive_frames()));
  for (int f = 0; f < t.alive_frames(); ++f) {
    out.write(reinterpret_cast<const char*>(t.observation(f)), kObservationSize * sizeof(float));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.actions[f].aim.index));
    put<std::uint16_t>(out, t.actions[f].keys.bits);
  }
  if (!out) throw DatasetError("failed writing " + path.string());
}

Trajectory read_trajectory(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open trajectory " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTrajMagic, 4) != 0)
    throw DatasetError("trajectory " + path.string() + " has a bad magic number");
  if (get<std::uint32_t>(in, path) != kTrajVersion)
    throw DatasetError("trajectory " + path.string() + " has an unsupported version");
  if (get<std::uint32_t>(in, path) != kTickRate)
    throw DatasetError("trajectory " + path.string() + " has a different tick rate");
  for (std::uint32_t d : kDims)
    if (get<std::uint32_t>(in, path) != d)
      throw DatasetError("trajectory " + path.string() + " has different sensor dimensions");
  Trajectory t;
  t.meta.player_id = get<std::int32_t>(in, path);
  t.meta.team = static_cast<Team>(get<std::uint8_t>(in, path));
  t.meta.role = static_cast<Role>(get<std::uint8_t>(in, path));
  t.meta.round_id = get<std::int32_t>(in, path);
  t.meta.kills = get<std::int32_t>(in, path);
  t.meta.deaths = get<std::int32_t>(in, path);
  t.meta.assists = get<std::int32_t>(in, path);
  t.meta.result = static_cast<Outcome>(get<std::uint8_t>(in, path));
  t.frame_count = static_cast<int>(get<std::uint32_t>(in, path));
  const auto alive = get<std::uint32_t>(in, path);
  if (alive > static_cast<std::uint32_t>(t.frame_count))
    throw DatasetError("trajectory " + path.string() + " has more alive frames than frames");
  t.observations.resize(static_cast<std::size_t>(alive) * kObservationSize);
  t.actions.resize(alive);
  for (std::uint32_t f = 0; f < alive; ++f) {
    if (!in.read(reinterpret_cast<char*>(t.observations.data() + f * kObservationSize),
                 kObservationSize * sizeof(float)))
      throw DatasetError("trajectory " + path.string() + " is truncated");
    const auto aim = get<std::uint16_t>(in, path);
    if (aim >= kNumAimActions) throw DatasetError("trajectory " + path.string() + " has a bad aim index");
    t.actions[f].aim.index = aim;
    t.actions[f].keys.bits = get<std::uint16_t>(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw DatasetError("trajectory " + path.string() + " has trailing bytes");
  return t;
}

// --- Dataset directory ------------------------------------------------------------

std::int64_t Dataset::total_timesteps() const {
  std::int64_t n = 0;
  for (const Trajectory& t : trajectories) n += t.frame_count;
  return n;
}

std::int64_t Dataset::alive_timesteps() const {
  std::int64_t n = 0;
  for (const Trajectory& t : trajectories) n += t.alive_frames();
  return n;
}

namespace {

std::string trajectory_name(const Trajectory& t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "round_%05d_player_%d.traj", t.meta.round_id, t.meta.player_id);
  return buf;
}

std::string log_name(int match) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "match_%04d.jsonl", match);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& d, const fs::path& dir) {
  fs::create_directories(dir / "trajectories");
  fs::create_directories(dir / "logs");
  json manifest = d.manifest;
  json files = json::array();
  for (const Trajectory& t : d.trajectories) {
    const std::string name = trajectory_name(t);
    write_trajectory(t, dir / "trajectories" / name);
    files.push_back("trajectories/" + name);
  }
  std::map<int, std::vector<RoundLog>> by_match;
  for (const RoundLog& r : d.rounds) by_match[r.match_id].push_back(r);
  json logs = json::array();
  for (const auto& [match, rounds] : by_match) {
    write_match_log(rounds, dir / "logs" / log_name(match));
    logs.push_back("logs/" + log_name(match));
  }
  manifest["trajectory_files"] = files;
  manifest["log_files"] = logs;
  manifest["trajectory_count"] = d.trajectories.size();
  manifest["round_count"] = d.rounds.size();
  manifest["total_timesteps"] = d.total_timesteps();
  manifest["alive_timesteps"] = d.alive_timesteps();
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& dir, bool with_logs) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DatasetError("no dataset manifest at " + mpath.string());
  Dataset d;
  try {
    d.manifest = json::parse(in);
    for (const json& f : d.manifest.at("trajectory_files"))
      d.trajectories.push_back(read_trajectory(dir / f.get<std::string>()));
    if (with_logs)
      for (const json& f : d.manifest.at("log_files")) {
        auto rounds = read_match_log(dir / f.get<std::string>());
        d.rounds.insert(d.rounds.end(), rounds.begin(), rounds.end());
      }
  } catch (const json::exception& e) {
    throw DatasetError("bad manifest " + mpath.string() + ": " + e.what());
  }
  if (d.manifest.contains("total_timesteps") &&
      d.manifest["total_timesteps"].get<std::int64_t>() != d.total_timesteps())
    throw DatasetError("manifest timestep count does not match the trajectories");
  return d;
}

}  // namespace tacbot
