#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace presca;
using presca::testing::mini_map;

namespace {

StepResult run(const GridWorld& w, State& s, std::initializer_list<Action> actions) {
  StepResult r{s};
  for (Action a : actions) {
    r = w.step(s, a);
    s = r.next;
  }
  return r;
}

}  // namespace

TEST_CASE("initial state on the mini map") {
  const GridWorld w;
  const State s = w.initial_state(mini_map());
  CHECK(s.agent_pos == Position{0, 0});
  CHECK(s.agent_dir == Direction::east);
  CHECK(s.object_at({0, 2}) == Object::stick);
  CHECK(s.object_at({0, 3}) == Object::plank);
  CHECK(s.object_at({3, 0}) == Object::broken_ladder);
  CHECK(s.object_at({1, 3}) == Object::crafting_station);
  CHECK(s.object_at({2, 3}) == Object::docker);
  CHECK(s.object_at({-1, 0}) == Object::wall);
  CHECK(s.inventory_size() == 0);
  for (ConceptId c : kAllConcepts) CHECK_FALSE(ground_truth(c, s));
}

TEST_CASE("infeasible actions cost one step and change nothing") {
  const GridWorld w;
  const State s = w.initial_state(mini_map());
  for (Action a : {Action::pick, Action::drop, Action::craft, Action::no_op}) {
    const StepResult r = w.step(s, a);
    CHECK(r.next.same_configuration(s));
    CHECK(r.reward == doctest::Approx(-0.0045));
    CHECK(r.next.step_count == 1);
    CHECK_FALSE(r.done);
  }
  State facing_wall = s;
  facing_wall.agent_dir = Direction::north;
  CHECK(w.step(facing_wall, Action::move_forward).next.same_configuration(facing_wall));
}

TEST_CASE("pickup rewards are paid once per item") {
  const GridWorld w;
  State s = w.initial_state(mini_map());
  StepResult r = run(w, s, {Action::move_forward, Action::pick});
  CHECK(r.event == Event::picked_stick);
  CHECK(r.reward == doctest::Approx(0.2 - 0.0045));
  CHECK(ground_truth(ConceptId::has_stick, s));
  r = run(w, s, {Action::drop});
  CHECK(r.event == Event::dropped);
  CHECK(r.reward == doctest::Approx(-0.1 - 0.0045));
  r = run(w, s, {Action::pick});
  CHECK(r.event == Event::picked_stick);
  CHECK(r.reward == doctest::Approx(-0.0045));
}

TEST_CASE("storage contents are reachable only from inside storage") {
  const GridWorld w;
  const State s = w.initial_state(mini_map());
  State outside = s;
  outside.item_place[2] = static_cast<std::uint8_t>(s.map->cell_index({3, 1}));
  outside.agent_pos = {3, 2};
  outside.agent_dir = Direction::west;
  CHECK(w.step(outside, Action::pick).event == Event::none);
  State inside = s;
  inside.agent_pos = {2, 0};
  inside.agent_dir = Direction::south;
  const StepResult r = w.step(inside, Action::pick);
  CHECK(r.event == Event::picked_broken_ladder);
  CHECK(r.reward == doctest::Approx(2.0 - 0.0045));
  CHECK(ground_truth(ConceptId::in_storage_area, r.next));
  CHECK(ground_truth(ConceptId::has_broken_ladder, r.next));
}

TEST_CASE("scripted routes reach the goal") {
  const GridWorld w;
  State s = w.initial_state(mini_map());
  double total = 0.0;
  StepResult r{s};
  for (Action a : presca::testing::mini_repair_route()) {
    r = w.step(s, a);
    total += r.reward;
    s = r.next;
  }
  CHECK(r.goal);
  CHECK(r.done);
  CHECK(r.event == Event::docked);
  CHECK(total == doctest::Approx(2.0 + 0.5 + 1.0 - 15 * 0.0045));
  // Goal states are absorbing.
  const StepResult after = w.step(s, Action::move_forward);
  CHECK(after.goal);
  CHECK(after.reward == 0.0);
  CHECK(after.next.same_configuration(s));

  State c = w.initial_state(mini_map());
  r = run(w, c, {Action::move_forward, Action::pick, Action::move_forward, Action::pick});
  CHECK(ground_truth(ConceptId::has_stick_and_plank, c));
  r = run(w, c, {Action::rotate_right, Action::craft});
  CHECK(r.event == Event::none);  // facing (2,1), not the station
  r = run(w, c, {Action::move_forward, Action::rotate_left, Action::craft});
  CHECK(r.event == Event::crafted);
  CHECK(ground_truth(ConceptId::has_ladder, c));
  CHECK(c.inventory_size() == 1);
}

TEST_CASE("episode cap ends the episode") {
  EnvConfig cfg;
  cfg.episode_cap = 5;
  const GridWorld w(cfg);
  State s = w.initial_state(mini_map());
  for (int i = 0; i < 4; ++i) {
    const StepResult r = w.step(s, Action::no_op);
    CHECK_FALSE(r.done);
    s = r.next;
  }
  const StepResult r = w.step(s, Action::no_op);
  CHECK(r.done);
  CHECK_FALSE(r.goal);
}

TEST_CASE("encoding is injective over every reachable configuration") {
  const GridWorld w;
  const State start = w.initial_state(mini_map());
  const auto states = enumerate_reachable(w, start);
  REQUIRE(states.size() > 1000);
  std::set<std::vector<double>> seen;
  std::set<std::uint64_t> keys;
  for (const auto& s : states) {
    seen.insert(encode(s).flattened());
    keys.insert(config_key(s));
  }
  CHECK(seen.size() == states.size());
  CHECK(keys.size() == states.size());
  CHECK(encoding_length(4, 4) == 4 * 4 * 3 + 7);
  CHECK(encode(start).flattened().size() == 55u);
}

TEST_CASE("encoding channels") {
  const GridWorld w;
  State s = w.initial_state(mini_map());
  const StateEncoding e = encode(s);
  CHECK(e.at(0, 2, 0) == doctest::Approx(1.0 / 7));
  CHECK(e.at(2, 3, 0) == doctest::Approx(6.0 / 7));
  CHECK(e.at(0, 0, 1) == doctest::Approx(2.0 / 5));  // east
  CHECK(e.at(0, 1, 1) == 0.0);
  CHECK(e.at(3, 1, 2) == 1.0);
  CHECK(e.at(0, 0, 2) == 0.0);
  run(w, s, {Action::move_forward, Action::pick});
  const StateEncoding e2 = encode(s);
  CHECK(e2.inventory[0] == 1.0);
  CHECK(e2.inventory[4] == 1.0);  // stick collected bit
  CHECK(e2.at(0, 2, 0) == 0.0);
}

TEST_CASE("map generation") {
  const auto a = generate_maps(7, 10);
  const auto b = generate_maps(7, 10);
  CHECK(a == b);
  CHECK(generate_maps(8, 10) != a);
  const GridWorld w;
  for (const auto& m : share_maps(a)) {
    CHECK(m->width == 6);
    CHECK(m->storage.width * m->storage.height == 4);
    CHECK(m->in_storage(m->broken_ladder));
    CHECK_FALSE(m->in_storage(m->agent_start));
    CHECK(craft_route_feasible(w, m));
    CHECK(repair_route_feasible(w, m));
  }
  CHECK(maps_from_text(maps_to_text(a)) == a);
  CHECK_THROWS_AS(maps_from_text("{\"nonsense\": 1}"), Error);
}

TEST_CASE("storage is rarely visited by a random walk") {
  const GridWorld w;
  const auto maps = presca::testing::seed_maps();
  auto rng = make_rng(7, {99});
  std::size_t in = 0, total = 0;
  for (int e = 0; e < 200; ++e) {
    for (const auto& s : run_random_episode(w, maps[e % maps.size()], 100, rng)) {
      in += ground_truth(ConceptId::in_storage_area, s);
      ++total;
    }
  }
  const double rate = static_cast<double>(in) / static_cast<double>(total);
  MESSAGE("storage occupancy " << rate);
  CHECK(rate < 0.2);
}

TEST_CASE("canonical strings round-trip and ignore step count") {
  const GridWorld w;
  const auto maps = presca::testing::seed_maps();
  auto rng = make_rng(7, {3});
  for (const auto& s : run_random_episode(w, maps[3], 60, rng)) {
    const State back = parse_canonical(canonical_string(s), maps);
    CHECK(back.same_configuration(s));
    State later = s;
    later.step_count += 17;
    CHECK(state_hash(later) == state_hash(s));
  }
  CHECK_THROWS_AS(parse_canonical("garbage", maps), Error);
}

TEST_CASE("rendering") {
  const GridWorld w;
  const Image img = render(w.initial_state(presca::testing::seed_maps()[0]));
  CHECK(img.pixels.size() == static_cast<std::size_t>(Image::kWidth * Image::kHeight * 3));
}

TEST_CASE("trajectory log has one line per state") {
  const GridWorld w;
  State s = w.initial_state(mini_map());
  std::vector<State> states{s};
  std::vector<Action> actions;
  std::vector<double> rewards;
  for (Action a : presca::testing::mini_repair_route()) {
    const StepResult r = w.step(s, a);
    actions.push_back(a);
    rewards.push_back(r.reward);
    s = r.next;
    states.push_back(s);
  }
  std::ostringstream out;
  write_trajectory(out, states, actions, rewards);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(states.size()));
  CHECK(concept_bits(s).size() == kNumConcepts);
}
