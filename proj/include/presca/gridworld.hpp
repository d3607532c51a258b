#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "presca/concepts.hpp"

namespace presca {

enum class Action : std::uint8_t { rotate_left, rotate_right, move_forward, pick, drop, craft, no_op };
inline constexpr int kNumActions = 7;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::rotate_left, Action::rotate_right, Action::move_forward, Action::pick,
    Action::drop,        Action::craft,        Action::no_op,
};
std::string_view action_name(Action a);

enum class Direction : std::uint8_t { north, east, south, west };

/// Token occupying a grid cell. Codes are stable: they feed the encoding.
enum class Object : std::uint8_t {
  none = 0,
  stick,
  plank,
  broken_ladder,
  ladder,
  crafting_station,
  docker,
  wall,
};
inline constexpr int kMaxObjectCode = 7;

/// Inventory slots.
enum class Item : std::uint8_t { stick, plank, broken_ladder, ladder };
inline constexpr int kNumItems = 4;
/// Items that start on the map and can be picked up.
inline constexpr int kNumMovable = 3;

struct Position {
  int row = 0;
  int col = 0;
  auto operator<=>(const Position&) const = default;
};

struct Rect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
  bool contains(Position p) const {
    return p.row >= row && p.row < row + height && p.col >= col && p.col < col + width;
  }
  auto operator<=>(const Rect&) const = default;
};

/// One map of the domain: object placements, storage rectangle and start pose.
struct MapSpec {
  static constexpr int kVersion = 1;

  int id = 0;
  std::uint64_t rng_seed = 0;
  int width = 6;
  int height = 6;
  Rect storage;
  Position stick;
  Position plank;
  Position broken_ladder;
  Position crafting_station;
  Position docker;
  std::vector<Position> walls;
  Position agent_start{0, 0};
  Direction agent_start_dir = Direction::east;

  bool in_bounds(Position p) const { return p.row >= 0 && p.row < height && p.col >= 0 && p.col < width; }
  bool in_storage(Position p) const { return storage.contains(p); }
  int cell_index(Position p) const { return p.row * width + p.col; }
  Position cell_position(int index) const { return {index / width, index % width}; }
  bool operator==(const MapSpec&) const = default;
};

using MapPtr = std::shared_ptr<const MapSpec>;

enum class LadderState : std::uint8_t { absent, carried, docked };

/// Full configuration of the world. The static layout is shared through `map`.
///
/// Movable items (stick, plank, broken ladder) are tracked by location: a cell
/// index, kCarried or kConsumed. `collected` holds one bit per movable item whose
/// pickup reward has already been paid in this episode.
struct State {
  static constexpr std::uint8_t kCarried = 254;
  static constexpr std::uint8_t kConsumed = 255;

  MapPtr map;
  Position agent_pos;
  Direction agent_dir = Direction::east;
  std::array<std::uint8_t, kNumMovable> item_place{};
  LadderState ladder = LadderState::absent;
  std::uint8_t collected = 0;
  int step_count = 0;

  Object object_at(Position p) const;
  bool in_storage(Position p) const { return map->in_storage(p); }
  bool carries(Item item) const;
  int inventory_size() const;
  /// Counts per inventory slot (stick, plank, broken_ladder, ladder).
  std::array<int, kNumItems> inventory() const;
  Position ahead() const;

  /// Equal positions, inventory and grid; ignores step_count.
  bool same_configuration(const State& other) const;
  bool operator==(const State& other) const {
    return same_configuration(other) && step_count == other.step_count;
  }
};

struct RewardConfig {
  double goal = 1.0;
  double step_cost = 0.0045;
  double pick_stick = 0.2;
  double pick_plank = 0.2;
  double pick_broken_ladder = 2.0;
  double craft = 0.5;
  double drop_penalty = -0.1;
};

struct EnvConfig {
  RewardConfig rewards;
  int episode_cap = 100;
};

enum class Event : std::uint8_t {
  none,
  picked_stick,
  picked_plank,
  picked_broken_ladder,
  crafted,
  repaired,
  dropped,
  docked,
};

struct StepResult {
  State next;
  double reward = 0.0;
  bool done = false;
  /// True when `next` is a goal state (terminal, no bootstrapping).
  bool goal = false;
  Event event = Event::none;
};

/// Deterministic crafting gridworld. Infeasible actions leave the configuration
/// unchanged and still pay the step cost.
class GridWorld {
 public:
  explicit GridWorld(EnvConfig config = {}) : config_(config) {}

  const EnvConfig& config() const { return config_; }
  State initial_state(MapPtr map) const;
  StepResult step(const State& state, Action action) const;

 private:
  EnvConfig config_;
};

bool ground_truth(ConceptId c, const State& state);
bool is_goal(const State& state);

/// Flattened object/inventory encoding.
struct StateEncoding {
  static constexpr int kChannels = 3;
  static constexpr int kInventorySlots = 7;

  int width = 0;
  int height = 0;
  std::vector<double> spatial;  // height x width x 3, row-major
  std::array<double, kInventorySlots> inventory{};

  double at(int row, int col, int channel) const { return spatial[(row * width + col) * kChannels + channel]; }
  std::vector<double> flattened() const;
  bool operator==(const StateEncoding&) const = default;
};

StateEncoding encode(const State& state);
/// Length of encode(s).flattened() for a map of the given size.
inline int encoding_length(int width, int height) {
  return width * height * StateEncoding::kChannels + StateEncoding::kInventorySlots;
}

struct Image {
  static constexpr int kWidth = 48;
  static constexpr int kHeight = 48;
  static constexpr int kChannels = 3;
  std::vector<std::uint8_t> pixels;  // row-major RGB
  std::array<std::uint8_t, 3> pixel(int row, int col) const {
    const auto i = static_cast<std::size_t>((row * kWidth + col) * kChannels);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
};

Image render(const State& state);

struct GenerationOptions {
  int width = 6;
  int height = 6;
  int storage_height = 2;
  int storage_width = 2;
  int max_retries = 2000;
};

/// Random maps with both solution routes feasible. Throws GenerationError when
/// the retry bound is hit.
std::vector<MapSpec> generate_maps(std::uint64_t master_seed, int count, const GenerationOptions& options = {});
std::vector<MapPtr> share_maps(const std::vector<MapSpec>& maps);

/// Uniform-random rollout from the map's initial state. Includes the initial state.
std::vector<State> run_random_episode(const GridWorld& world, const MapPtr& map, int episode_length,
                                      std::mt19937_64& rng);

Action uniform_action(std::mt19937_64& rng);

// -- search -------------------------------------------------------------------

using StatePredicate = std::function<bool(const State&)>;
/// Decides whether a transition may be taken during search.
using TransitionFilter = std::function<bool(const State& from, Action action, const StepResult& result)>;

/// Breadth-first shortest action sequence from `start` to a state satisfying `goal`.
std::optional<std::vector<Action>> shortest_plan(const GridWorld& world, const State& start, const StatePredicate& goal,
                                                 const TransitionFilter& allowed = nullptr,
                                                 std::size_t max_states = 2'000'000);

/// All configurations reachable from `start` (step_count zeroed), start first.
std::vector<State> enumerate_reachable(const GridWorld& world, const State& start,
                                       const TransitionFilter& allowed = nullptr,
                                       std::size_t max_states = 2'000'000);

/// Transition filter used by the feasibility checks: forbids dropping anything
/// except the ladder onto the docker.
bool no_spurious_drop(const State& from, Action action, const StepResult& result);

bool craft_route_feasible(const GridWorld& world, const MapPtr& map);
bool repair_route_feasible(const GridWorld& world, const MapPtr& map);

// -- identity -----------------------------------------------------------------

/// Exact packing of the configuration within one map (excludes step_count).
std::uint64_t config_key(const State& state);
std::uint64_t map_fingerprint(const MapSpec& map);
/// Canonical text of map fingerprint and configuration; the unit of label dedup.
std::string canonical_string(const State& state);
/// FNV-1a of canonical_string.
std::uint64_t state_hash(const State& state);
std::string hex_hash(std::uint64_t h);
/// Inverse of canonical_string for a known map set.
State parse_canonical(const std::string& text, const std::vector<MapPtr>& maps);

// -- persistence ----------------------------------------------------------------

std::string maps_to_text(const std::vector<MapSpec>& maps);
std::vector<MapSpec> maps_from_text(const std::string& text);
void save_maps(const std::string& path, const std::vector<MapSpec>& maps);
std::vector<MapSpec> load_maps(const std::string& path);

/// One JSON line per transition: step, state hash, action, reward, concept bits.
void write_trajectory(std::ostream& out, const std::vector<State>& states, const std::vector<Action>& actions,
                      const std::vector<double>& rewards);
std::string concept_bits(const State& state);

}  // namespace presca
