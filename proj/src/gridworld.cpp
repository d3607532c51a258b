#include "presca/gridworld.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "presca/error.hpp"
#include "presca/rng.hpp"

namespace presca {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "rotate_left", "rotate_right", "move_forward", "pick", "drop", "craft", "no_op",
};

constexpr std::array<Object, kNumMovable> kMovableObject = {Object::stick, Object::plank, Object::broken_ladder};

int movable_index(Object o) {
  switch (o) {
    case Object::stick: return 0;
    case Object::plank: return 1;
    case Object::broken_ladder: return 2;
    default: return -1;
  }
}

Position offset(Position p, Direction d) {
  switch (d) {
    case Direction::north: return {p.row - 1, p.col};
    case Direction::east: return {p.row, p.col + 1};
    case Direction::south: return {p.row + 1, p.col};
    case Direction::west: return {p.row, p.col - 1};
  }
  return p;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string_view action_name(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

// -- State ---------------------------------------------------------------------

Object State::object_at(Position p) const {
  if (!map->in_bounds(p)) return Object::wall;
  if (p == map->crafting_station) return Object::crafting_station;
  if (p == map->docker) return Object::docker;
  for (const auto& w : map->walls) {
    if (w == p) return Object::wall;
  }
  const int cell = map->cell_index(p);
  for (int i = 0; i < kNumMovable; ++i) {
    if (item_place[i] == cell) return kMovableObject[i];
  }
  return Object::none;
}

bool State::carries(Item item) const {
  if (item == Item::ladder) return ladder == LadderState::carried;
  return item_place[static_cast<std::size_t>(item)] == kCarried;
}

int State::inventory_size() const {
  int n = ladder == LadderState::carried ? 1 : 0;
  for (auto place : item_place) n += place == kCarried ? 1 : 0;
  return n;
}

std::array<int, kNumItems> State::inventory() const {
  return {carries(Item::stick) ? 1 : 0, carries(Item::plank) ? 1 : 0, carries(Item::broken_ladder) ? 1 : 0,
          carries(Item::ladder) ? 1 : 0};
}

Position State::ahead() const { return offset(agent_pos, agent_dir); }

bool State::same_configuration(const State& other) const {
  return (map == other.map || *map == *other.map) && agent_pos == other.agent_pos && agent_dir == other.agent_dir &&
         item_place == other.item_place && ladder == other.ladder && collected == other.collected;
}

// -- dynamics --------------------------------------------------------------------

State GridWorld::initial_state(MapPtr map) const {
  State s;
  s.agent_pos = map->agent_start;
  s.agent_dir = map->agent_start_dir;
  s.item_place = {static_cast<std::uint8_t>(map->cell_index(map->stick)),
                  static_cast<std::uint8_t>(map->cell_index(map->plank)),
                  static_cast<std::uint8_t>(map->cell_index(map->broken_ladder))};
  s.map = std::move(map);
  return s;
}

StepResult GridWorld::step(const State& state, Action action) const {
  const RewardConfig& r = config_.rewards;
  StepResult out{state, 0.0, false, false, Event::none};
  if (state.ladder == LadderState::docked) {
    out.done = true;
    out.goal = true;
    return out;
  }
  State& next = out.next;
  next.step_count = state.step_count + 1;
  out.reward = -r.step_cost;

  const Position front = state.ahead();
  const Object facing = state.object_at(front);

  switch (action) {
    case Action::rotate_left:
      next.agent_dir = static_cast<Direction>((static_cast<int>(state.agent_dir) + 3) % 4);
      break;
    case Action::rotate_right:
      next.agent_dir = static_cast<Direction>((static_cast<int>(state.agent_dir) + 1) % 4);
      break;
    case Action::move_forward:
      if (facing == Object::none) next.agent_pos = front;
      break;
    case Action::pick: {
      const int idx = movable_index(facing);
      if (idx < 0) break;
      // Storage contents can only be reached from inside the storage area.
      if (state.in_storage(front) && !state.in_storage(state.agent_pos)) break;
      if (state.inventory_size() >= 2) break;
      if (facing == Object::broken_ladder && state.ladder == LadderState::carried) break;
      next.item_place[idx] = State::kCarried;
      const std::uint8_t bit = static_cast<std::uint8_t>(1u << idx);
      const bool first = (state.collected & bit) == 0;
      next.collected |= bit;
      if (facing == Object::stick) {
        out.event = Event::picked_stick;
        if (first) out.reward += r.pick_stick;
      } else if (facing == Object::plank) {
        out.event = Event::picked_plank;
        if (first) out.reward += r.pick_plank;
      } else {
        out.event = Event::picked_broken_ladder;
        if (first) out.reward += r.pick_broken_ladder;
      }
      break;
    }
    case Action::drop: {
      if (state.ladder == LadderState::carried && facing == Object::docker) {
        next.ladder = LadderState::docked;
        out.reward += r.goal;
        out.event = Event::docked;
        break;
      }
      if (facing != Object::none) break;
      // The ladder only leaves the inventory at the docker; the broken ladder
      // only rests inside storage.
      for (int idx = 0; idx < kNumMovable; ++idx) {
        if (state.item_place[idx] != State::kCarried) continue;
        if (kMovableObject[idx] == Object::broken_ladder && !state.in_storage(front)) continue;
        next.item_place[idx] = static_cast<std::uint8_t>(state.map->cell_index(front));
        out.reward += r.drop_penalty;
        out.event = Event::dropped;
        break;
      }
      break;
    }
    case Action::craft: {
      if (facing != Object::crafting_station) break;
      if (state.carries(Item::broken_ladder)) {
        next.item_place[2] = State::kConsumed;
        next.ladder = LadderState::carried;
        out.reward += r.craft;
        out.event = Event::repaired;
      } else if (state.carries(Item::stick) && state.carries(Item::plank)) {
        next.item_place[0] = State::kConsumed;
        next.item_place[1] = State::kConsumed;
        next.ladder = LadderState::carried;
        out.reward += r.craft;
        out.event = Event::crafted;
      }
      break;
    }
    case Action::no_op:
      break;
  }

  out.goal = next.ladder == LadderState::docked;
  out.done = out.goal || next.step_count >= config_.episode_cap;
  return out;
}

// -- concepts --------------------------------------------------------------------

bool ground_truth(ConceptId c, const State& s) {
  switch (c) {
    case ConceptId::in_storage_area: return s.in_storage(s.agent_pos);
    case ConceptId::has_stick: return s.carries(Item::stick);
    case ConceptId::has_plank: return s.carries(Item::plank);
    case ConceptId::has_stick_and_plank: return s.carries(Item::stick) && s.carries(Item::plank);
    case ConceptId::has_broken_ladder: return s.carries(Item::broken_ladder);
    case ConceptId::has_ladder: return s.carries(Item::ladder);
    case ConceptId::ladder_at_docker: return s.ladder == LadderState::docked;
  }
  return false;
}

bool is_goal(const State& s) { return s.ladder == LadderState::docked; }

// -- encoding --------------------------------------------------------------------

std::vector<double> StateEncoding::flattened() const {
  std::vector<double> out(spatial);
  out.insert(out.end(), inventory.begin(), inventory.end());
  return out;
}

StateEncoding encode(const State& s) {
  const MapSpec& m = *s.map;
  StateEncoding e;
  e.width = m.width;
  e.height = m.height;
  e.spatial.assign(static_cast<std::size_t>(m.width * m.height * StateEncoding::kChannels), 0.0);
  for (int row = 0; row < m.height; ++row) {
    for (int col = 0; col < m.width; ++col) {
      const Position p{row, col};
      const std::size_t base = static_cast<std::size_t>(m.cell_index(p) * StateEncoding::kChannels);
      e.spatial[base] = static_cast<double>(s.object_at(p)) / kMaxObjectCode;
      if (p == s.agent_pos) e.spatial[base + 1] = (1.0 + static_cast<double>(s.agent_dir)) / 5.0;
      e.spatial[base + 2] = m.in_storage(p) ? 1.0 : 0.0;
    }
  }
  const auto inv = s.inventory();
  for (int i = 0; i < kNumItems; ++i) e.inventory[i] = inv[i];
  for (int i = 0; i < kNumMovable; ++i) e.inventory[kNumItems + i] = (s.collected >> i) & 1u;
  return e;
}

// -- rendering -------------------------------------------------------------------

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr Rgb kPlainColor{118, 170, 92};
constexpr Rgb kStorageColor{176, 128, 64};
constexpr Rgb kGridLine{60, 60, 60};
constexpr Rgb kStripColor{32, 32, 32};
constexpr Rgb kAgentColor{245, 245, 245};
constexpr Rgb kAgentMark{200, 20, 20};

Rgb object_color(Object o) {
  switch (o) {
    case Object::stick: return {120, 72, 24};
    case Object::plank: return {230, 196, 140};
    case Object::broken_ladder: return {240, 70, 70};
    case Object::ladder: return {250, 210, 0};
    case Object::crafting_station: return {70, 80, 210};
    case Object::docker: return {20, 20, 20};
    case Object::wall: return {100, 100, 100};
    case Object::none: break;
  }
  return {0, 0, 0};
}

struct Canvas {
  Image img;
  Canvas() { img.pixels.assign(Image::kWidth * Image::kHeight * Image::kChannels, 0); }
  void fill(int row0, int col0, int h, int w, Rgb c) {
    for (int r = std::max(0, row0); r < std::min(Image::kHeight, row0 + h); ++r) {
      for (int col = std::max(0, col0); col < std::min(Image::kWidth, col0 + w); ++col) {
        const auto i = static_cast<std::size_t>((r * Image::kWidth + col) * Image::kChannels);
        img.pixels[i] = c[0];
        img.pixels[i + 1] = c[1];
        img.pixels[i + 2] = c[2];
      }
    }
  }
};

}  // namespace

Image render(const State& s) {
  const MapSpec& m = *s.map;
  constexpr int kStrip = 6;
  const int cell = std::max(1, std::min((Image::kHeight - kStrip) / m.height, Image::kWidth / m.width));
  const int x0 = (Image::kWidth - cell * m.width) / 2;
  Canvas canvas;
  for (int row = 0; row < m.height; ++row) {
    for (int col = 0; col < m.width; ++col) {
      const Position p{row, col};
      const int top = row * cell;
      const int left = x0 + col * cell;
      canvas.fill(top, left, cell, cell, kGridLine);
      canvas.fill(top, left, cell - 1, cell - 1, m.in_storage(p) ? kStorageColor : kPlainColor);
      const Object o = s.object_at(p);
      if (o != Object::none) canvas.fill(top + 1, left + 1, cell - 3, cell - 3, object_color(o));
      if (o == Object::docker && s.ladder == LadderState::docked) {
        canvas.fill(top + cell / 2 - 1, left + cell / 2 - 1, 2, 2, object_color(Object::ladder));
      }
      if (p == s.agent_pos) {
        const int inset = std::max(1, cell / 4);
        canvas.fill(top + inset, left + inset, cell - 2 * inset, cell - 2 * inset, kAgentColor);
        const int mid = cell / 2;
        switch (s.agent_dir) {
          case Direction::north: canvas.fill(top, left + mid - 1, inset, 2, kAgentMark); break;
          case Direction::south: canvas.fill(top + cell - 1 - inset, left + mid - 1, inset, 2, kAgentMark); break;
          case Direction::east: canvas.fill(top + mid - 1, left + cell - 1 - inset, 2, inset, kAgentMark); break;
          case Direction::west: canvas.fill(top + mid - 1, left, 2, inset, kAgentMark); break;
        }
      }
    }
  }
  canvas.fill(Image::kHeight - kStrip, 0, kStrip, Image::kWidth, kStripColor);
  const std::array<Object, kNumItems> slot_object = {Object::stick, Object::plank, Object::broken_ladder,
                                                     Object::ladder};
  const auto inv = s.inventory();
  int x = 2;
  for (int i = 0; i < kNumItems; ++i) {
    if (inv[i] == 0) continue;
    canvas.fill(Image::kHeight - kStrip + 1, x, kStrip - 2, kStrip - 2, object_color(slot_object[i]));
    x += kStrip;
  }
  return canvas.img;
}

// -- random rollouts -------------------------------------------------------------

Action uniform_action(std::mt19937_64& rng) { return kAllActions[uniform_index(rng, kNumActions)]; }

std::vector<State> run_random_episode(const GridWorld& world, const MapPtr& map, int episode_length,
                                      std::mt19937_64& rng) {
  std::vector<State> states;
  states.reserve(static_cast<std::size_t>(episode_length) + 1);
  states.push_back(world.initial_state(map));
  for (int t = 0; t < episode_length; ++t) {
    StepResult res = world.step(states.back(), uniform_action(rng));
    const bool done = res.goal;
    states.push_back(std::move(res.next));
    if (done) break;
  }
  return states;
}

// -- identity --------------------------------------------------------------------

std::uint64_t config_key(const State& s) {
  std::uint64_t k = static_cast<std::uint64_t>(s.map->cell_index(s.agent_pos));
  k = (k << 2) | static_cast<std::uint64_t>(s.agent_dir);
  for (auto place : s.item_place) k = (k << 8) | place;
  k = (k << 2) | static_cast<std::uint64_t>(s.ladder);
  k = (k << 3) | s.collected;
  return k;
}

std::uint64_t map_fingerprint(const MapSpec& m) {
  std::ostringstream os;
  os << m.width << 'x' << m.height << ';' << m.storage.row << ',' << m.storage.col << ',' << m.storage.height << ','
     << m.storage.width;
  for (const Position& p : {m.stick, m.plank, m.broken_ladder, m.crafting_station, m.docker, m.agent_start}) {
    os << ';' << p.row << ',' << p.col;
  }
  os << ';' << static_cast<int>(m.agent_start_dir);
  for (const auto& w : m.walls) os << ";w" << w.row << ',' << w.col;
  return fnv1a(os.str());
}

std::string hex_hash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string canonical_string(const State& s) {
  std::ostringstream os;
  os << 'M' << hex_hash(map_fingerprint(*s.map)) << "|A" << s.agent_pos.row << ',' << s.agent_pos.col << ','
     << static_cast<int>(s.agent_dir) << "|I" << static_cast<int>(s.item_place[0]) << ','
     << static_cast<int>(s.item_place[1]) << ',' << static_cast<int>(s.item_place[2]) << "|L"
     << static_cast<int>(s.ladder) << "|C" << static_cast<int>(s.collected);
  return os.str();
}

std::uint64_t state_hash(const State& s) { return fnv1a(canonical_string(s)); }

State parse_canonical(const std::string& text, const std::vector<MapPtr>& maps) {
  char fp[17] = {};
  int r = 0, c = 0, d = 0, i0 = 0, i1 = 0, i2 = 0, l = 0, col = 0;
  if (std::sscanf(text.c_str(), "M%16[0-9a-f]|A%d,%d,%d|I%d,%d,%d|L%d|C%d", fp, &r, &c, &d, &i0, &i1, &i2, &l,
                  &col) != 9) {
    throw Error("malformed canonical state '" + text + "'");
  }
  for (const auto& m : maps) {
    if (hex_hash(map_fingerprint(*m)) != fp) continue;
    State s;
    s.map = m;
    s.agent_pos = {r, c};
    s.agent_dir = static_cast<Direction>(d);
    s.item_place = {static_cast<std::uint8_t>(i0), static_cast<std::uint8_t>(i1), static_cast<std::uint8_t>(i2)};
    s.ladder = static_cast<LadderState>(l);
    s.collected = static_cast<std::uint8_t>(col);
    return s;
  }
  throw Error("canonical state refers to an unknown map: " + std::string(fp));
}

// -- search ----------------------------------------------------------------------

namespace {

struct SearchNode {
  State state;
  std::int64_t parent;
  Action via;
};

}  // namespace

bool no_spurious_drop(const State&, Action, const StepResult& result) { return result.event != Event::dropped; }

std::optional<std::vector<Action>> shortest_plan(const GridWorld& world, const State& start,
                                                 const StatePredicate& goal, const TransitionFilter& allowed,
                                                 std::size_t max_states) {
  std::vector<SearchNode> nodes;
  std::unordered_set<std::uint64_t> seen;
  State root = start;
  root.step_count = 0;
  nodes.push_back({root, -1, Action::no_op});
  seen.insert(config_key(root));
  for (std::size_t head = 0; head < nodes.size(); ++head) {
    if (goal(nodes[head].state)) {
      std::vector<Action> plan;
      for (auto i = static_cast<std::int64_t>(head); nodes[i].parent >= 0; i = nodes[i].parent) {
        plan.push_back(nodes[i].via);
      }
      std::reverse(plan.begin(), plan.end());
      return plan;
    }
    if (is_goal(nodes[head].state)) continue;
    for (Action a : kAllActions) {
      StepResult res = world.step(nodes[head].state, a);
      if (allowed && !allowed(nodes[head].state, a, res)) continue;
      res.next.step_count = 0;
      if (!seen.insert(config_key(res.next)).second) continue;
      if (nodes.size() >= max_states) return std::nullopt;
      nodes.push_back({std::move(res.next), static_cast<std::int64_t>(head), a});
    }
  }
  return std::nullopt;
}

std::vector<State> enumerate_reachable(const GridWorld& world, const State& start, const TransitionFilter& allowed,
                                       std::size_t max_states) {
  std::vector<State> out;
  std::unordered_set<std::uint64_t> seen;
  State root = start;
  root.step_count = 0;
  out.push_back(root);
  seen.insert(config_key(root));
  for (std::size_t head = 0; head < out.size() && out.size() < max_states; ++head) {
    if (is_goal(out[head])) continue;
    for (Action a : kAllActions) {
      StepResult res = world.step(out[head], a);
      if (allowed && !allowed(out[head], a, res)) continue;
      res.next.step_count = 0;
      if (seen.insert(config_key(res.next)).second) out.push_back(std::move(res.next));
    }
  }
  return out;
}

bool craft_route_feasible(const GridWorld& world, const MapPtr& map) {
  const auto allowed = [](const State& from, Action a, const StepResult& res) {
    return no_spurious_drop(from, a, res) && !res.next.in_storage(res.next.agent_pos);
  };
  return shortest_plan(world, world.initial_state(map), is_goal, allowed).has_value();
}

bool repair_route_feasible(const GridWorld& world, const MapPtr& map) {
  const auto allowed = [](const State& from, Action a, const StepResult& res) {
    return no_spurious_drop(from, a, res) && res.event != Event::picked_stick && res.event != Event::picked_plank;
  };
  return shortest_plan(world, world.initial_state(map), is_goal, allowed).has_value();
}

// -- generation ------------------------------------------------------------------

std::vector<MapSpec> generate_maps(std::uint64_t master_seed, int count, const GenerationOptions& opt) {
  if (count < 1) throw GenerationError("map count must be at least 1");
  if (opt.width * opt.height > 250) throw GenerationError("grid too large for state packing");
  if (opt.storage_height > opt.height || opt.storage_width > opt.width) {
    throw GenerationError("storage area does not fit the grid");
  }
  const GridWorld world;
  std::vector<MapSpec> maps;
  for (int id = 0; id < count; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < opt.max_retries && !placed; ++attempt) {
      const std::uint64_t seed = derive_seed(master_seed, {static_cast<std::uint64_t>(id),
                                                           static_cast<std::uint64_t>(attempt)});
      std::mt19937_64 rng(seed);
      MapSpec m;
      m.id = id;
      m.rng_seed = seed;
      m.width = opt.width;
      m.height = opt.height;
      m.storage = {static_cast<int>(uniform_index(rng, opt.height - opt.storage_height + 1)),
                   static_cast<int>(uniform_index(rng, opt.width - opt.storage_width + 1)), opt.storage_height,
                   opt.storage_width};
      if (m.storage.contains(m.agent_start)) continue;
      std::vector<Position> inside, outside;
      for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
          const Position p{r, c};
          if (p == m.agent_start) continue;
          (m.storage.contains(p) ? inside : outside).push_back(p);
        }
      }
      if (inside.empty() || outside.size() < 4) continue;
      m.broken_ladder = inside[uniform_index(rng, inside.size())];
      std::array<Position*, 4> slots = {&m.stick, &m.plank, &m.crafting_station, &m.docker};
      for (Position* slot : slots) {
        const std::size_t i = uniform_index(rng, outside.size());
        *slot = outside[i];
        outside.erase(outside.begin() + static_cast<std::ptrdiff_t>(i));
      }
      const bool duplicate = std::any_of(maps.begin(), maps.end(), [&](const MapSpec& other) {
        return map_fingerprint(other) == map_fingerprint(m);
      });
      if (duplicate) continue;
      auto shared = std::make_shared<const MapSpec>(m);
      if (!craft_route_feasible(world, shared) || !repair_route_feasible(world, shared)) continue;
      maps.push_back(m);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("could not place a dual-route feasible map " + std::to_string(id) + " after " +
                            std::to_string(opt.max_retries) + " attempts");
    }
  }
  return maps;
}

std::vector<MapPtr> share_maps(const std::vector<MapSpec>& maps) {
  std::vector<MapPtr> out;
  out.reserve(maps.size());
  for (const auto& m : maps) out.push_back(std::make_shared<const MapSpec>(m));
  return out;
}

// -- persistence -----------------------------------------------------------------

namespace {

json pos_json(Position p) { return json::array({p.row, p.col}); }

Position pos_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

json map_json(const MapSpec& m) {
  json walls = json::array();
  for (const auto& w : m.walls) walls.push_back(pos_json(w));
  return {
      {"id", m.id},
      {"seed", std::to_string(m.rng_seed)},
      {"width", m.width},
      {"height", m.height},
      {"storage", {{"row", m.storage.row}, {"col", m.storage.col}, {"height", m.storage.height},
                   {"width", m.storage.width}}},
      {"placements",
       {{"stick", pos_json(m.stick)},
        {"plank", pos_json(m.plank)},
        {"broken_ladder", pos_json(m.broken_ladder)},
        {"crafting_station", pos_json(m.crafting_station)},
        {"docker", pos_json(m.docker)}}},
      {"walls", walls},
      {"agent_start", {{"row", m.agent_start.row}, {"col", m.agent_start.col},
                       {"dir", static_cast<int>(m.agent_start_dir)}}},
  };
}

MapSpec map_from(const json& j) {
  MapSpec m;
  m.id = j.at("id").get<int>();
  m.rng_seed = std::stoull(j.at("seed").get<std::string>());
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  const auto& st = j.at("storage");
  m.storage = {st.at("row").get<int>(), st.at("col").get<int>(), st.at("height").get<int>(),
               st.at("width").get<int>()};
  const auto& pl = j.at("placements");
  m.stick = pos_from(pl.at("stick"));
  m.plank = pos_from(pl.at("plank"));
  m.broken_ladder = pos_from(pl.at("broken_ladder"));
  m.crafting_station = pos_from(pl.at("crafting_station"));
  m.docker = pos_from(pl.at("docker"));
  for (const auto& w : j.value("walls", json::array())) m.walls.push_back(pos_from(w));
  const auto& a = j.at("agent_start");
  m.agent_start = {a.at("row").get<int>(), a.at("col").get<int>()};
  m.agent_start_dir = static_cast<Direction>(a.at("dir").get<int>());
  return m;
}

}  // namespace

std::string maps_to_text(const std::vector<MapSpec>& maps) {
  json doc = {{"schema", "presca.maps"}, {"version", MapSpec::kVersion}, {"maps", json::array()}};
  for (const auto& m : maps) doc["maps"].push_back(map_json(m));
  return doc.dump(2) + "\n";
}

std::vector<MapSpec> maps_from_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("map file is not valid JSON: ") + e.what());
  }
  if (doc.value("schema", "") != "presca.maps") throw Error("map file has wrong schema tag");
  if (doc.value("version", 0) != MapSpec::kVersion) throw Error("unsupported map file version");
  std::vector<MapSpec> maps;
  try {
    for (const auto& j : doc.at("maps")) maps.push_back(map_from(j));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed map entry: ") + e.what());
  }
  return maps;
}

void save_maps(const std::string& path, const std::vector<MapSpec>& maps) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << maps_to_text(maps);
}

std::vector<MapSpec> load_maps(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("map file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return maps_from_text(ss.str());
}

std::string concept_bits(const State& s) {
  std::string bits;
  for (ConceptId c : kAllConcepts) bits.push_back(ground_truth(c, s) ? '1' : '0');
  return bits;
}

void write_trajectory(std::ostream& out, const std::vector<State>& states, const std::vector<Action>& actions,
                      const std::vector<double>& rewards) {
  for (std::size_t t = 0; t < states.size(); ++t) {
    json row = {{"t", t}, {"state", hex_hash(state_hash(states[t]))}, {"concepts", concept_bits(states[t])}};
    if (t < actions.size()) row["action"] = action_name(actions[t]);
    if (t < rewards.size()) row["reward"] = rewards[t];
    out << row.dump() << '\n';
  }
}

}  // namespace presca
