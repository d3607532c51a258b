// Independent oracles and property checks shared by the unit tests and the
// acceptance runner. Nothing here calls the code path it is checking to
// produce an expected value.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "presca/acquisition.hpp"
#include "presca/causal_model.hpp"
#include "presca/classifier.hpp"
#include "presca/error.hpp"
#include "presca/gridworld.hpp"
#include "presca/oracle.hpp"
#include "presca/preference.hpp"
#include "presca/rng.hpp"

namespace presca::testing {

struct CheckResult {
  bool pass = false;
  std::string detail;
};

// -- fixtures ------------------------------------------------------------------------

/// 4x4 map, storage in the lower-left 2x2:
///
///   A . s p
///   . . . C
///   S S . D
///   B S . .
inline MapPtr mini_map() {
  MapSpec m;
  m.id = 0;
  m.width = 4;
  m.height = 4;
  m.storage = {2, 0, 2, 2};
  m.stick = {0, 2};
  m.plank = {0, 3};
  m.broken_ladder = {3, 0};
  m.crafting_station = {1, 3};
  m.docker = {2, 3};
  m.agent_start = {0, 0};
  m.agent_start_dir = Direction::east;
  return std::make_shared<const MapSpec>(m);
}

/// Hand-written 15-step repair route on mini_map().
inline std::vector<Action> mini_repair_route() {
  using A = Action;
  return {A::rotate_right, A::move_forward, A::move_forward, A::pick,          // broken ladder, from (2,0)
          A::rotate_left,  A::move_forward, A::move_forward, A::rotate_left,   // to (2,2) facing north
          A::move_forward, A::rotate_right, A::craft,                          // repair at (1,3)
          A::rotate_right, A::move_forward, A::rotate_left,  A::drop};         // dock at (2,3)
}

inline std::vector<MapPtr> seed_maps(std::uint64_t seed = 7, int count = 10) {
  return share_maps(generate_maps(seed, count));
}

// -- value iteration oracle -------------------------------------------------------------

struct ValueTable {
  std::unordered_map<std::uint64_t, double> v;
  std::size_t states = 0;
  int sweeps = 0;
};

/// Optimal discounted values of every configuration reachable from `start`;
/// transitions into a goal state do not bootstrap. `allowed` removes actions.
inline ValueTable value_iteration(const GridWorld& world, const State& start, double gamma, double tol = 1e-12,
                                  const TransitionFilter& allowed = nullptr) {
  const auto states = enumerate_reachable(world, start, allowed);
  std::unordered_map<std::uint64_t, std::size_t> index;
  for (std::size_t i = 0; i < states.size(); ++i) index.emplace(config_key(states[i]), i);
  struct Edge {
    double reward;
    bool goal;
    std::size_t next;
  };
  std::vector<std::vector<Edge>> edges(states.size());
  std::vector<bool> absorbing(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    absorbing[i] = is_goal(states[i]);
    for (int a = 0; a < kNumActions; ++a) {
      StepResult r = world.step(states[i], static_cast<Action>(a));
      if (allowed && !allowed(states[i], static_cast<Action>(a), r)) continue;
      r.next.step_count = 0;
      edges[i].push_back({r.reward, r.goal, index.at(config_key(r.next))});
    }
  }
  std::vector<double> v(states.size(), 0.0);
  ValueTable out;
  for (double delta = 1.0; delta > tol; ++out.sweeps) {
    delta = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (absorbing[i] || edges[i].empty()) continue;
      double best = -1e300;
      for (const Edge& e : edges[i]) best = std::max(best, e.reward + (e.goal ? 0.0 : gamma * v[e.next]));
      delta = std::max(delta, std::abs(best - v[i]));
      v[i] = best;
    }
  }
  for (std::size_t i = 0; i < states.size(); ++i) out.v[config_key(states[i])] = v[i];
  out.states = states.size();
  return out;
}

// -- Definition-1 grounding --------------------------------------------------------------

inline ConceptAssignment truth_assignment(const State& s) {
  ConceptAssignment a;
  for (ConceptId c : kAllConcepts) a.set(c, ground_truth(c, s));
  return a;
}

/// Hand-written reading of the crafting model: what must hold just before
/// `child` becomes true.
inline bool precondition_holds(ConceptId child, const State& before) {
  auto gt = [&](ConceptId c) { return ground_truth(c, before); };
  switch (child) {
    case ConceptId::has_broken_ladder: return gt(ConceptId::in_storage_area);
    case ConceptId::has_stick_and_plank: return gt(ConceptId::has_stick) || gt(ConceptId::has_plank);
    case ConceptId::has_ladder:
      return gt(ConceptId::has_broken_ladder) || gt(ConceptId::has_stick_and_plank);
    case ConceptId::ladder_at_docker: return gt(ConceptId::has_ladder);
    default: return true;
  }
}

struct GroundingStats {
  std::size_t transitions = 0;
  std::size_t random_transitions = 0;
  std::size_t flips = 0;
  std::size_t violations = 0;       // model check disagrees with the environment
  std::size_t oracle_mismatch = 0;  // model check disagrees with the hand-written reading
  std::map<ConceptId, std::size_t> flips_by_child;
};

inline void check_transition(const CausalModel& model, const State& before, const State& after, GroundingStats& st) {
  ++st.transitions;
  const ConceptAssignment a = truth_assignment(before);
  for (const auto& [child, eq] : model.equations()) {
    const bool was = ground_truth(child, before);
    const bool now = ground_truth(child, after);
    const bool model_ok = check_transition_grounding(model, child, a, now);
    if (!was && now) {
      ++st.flips;
      ++st.flips_by_child[child];
      if (!precondition_holds(child, before)) ++st.oracle_mismatch;
    }
    if (!model_ok) ++st.violations;
    if (!was && now && model_ok != precondition_holds(child, before)) ++st.oracle_mismatch;
  }
}

/// Random-episode transitions on every map plus the shortest craft- and
/// repair-route plans (so every equation is seen flipping).
inline GroundingStats definition1_sweep(const GridWorld& world, const std::vector<MapPtr>& maps,
                                        const CausalModel& model, std::size_t min_transitions, std::uint64_t seed) {
  GroundingStats st;
  auto rng = make_rng(seed, {0xd1});
  for (const auto& map : maps) {
    const State start = world.initial_state(map);
    const TransitionFilter craft = [](const State&, Action, const StepResult& r) {
      return r.event != Event::dropped && !ground_truth(ConceptId::in_storage_area, r.next);
    };
    const TransitionFilter repair = [](const State&, Action, const StepResult& r) {
      return r.event != Event::dropped && r.event != Event::picked_stick && r.event != Event::picked_plank;
    };
    for (const auto& filter : {craft, repair}) {
      auto plan = shortest_plan(world, start, is_goal, filter);
      if (!plan) continue;
      State s = start;
      for (Action a : *plan) {
        StepResult r = world.step(s, a);
        check_transition(model, s, r.next, st);
        s = std::move(r.next);
      }
    }
  }
  while (st.random_transitions < min_transitions) {
    const auto& map = maps[uniform_index(rng, maps.size())];
    State s = world.initial_state(map);
    for (int t = 0; t < 200; ++t) {
      StepResult r = world.step(s, uniform_action(rng));
      check_transition(model, s, r.next, st);
      ++st.random_transitions;
      if (r.goal) break;
      s = std::move(r.next);
    }
  }
  return st;
}

inline CheckResult check_definition1(std::size_t min_transitions = 1000, std::uint64_t seed = 7) {
  const GridWorld world;
  const auto maps = seed_maps(seed);
  const auto model = crafting_model();
  const GroundingStats st = definition1_sweep(world, maps, model, min_transitions, seed);
  std::ostringstream d;
  d << st.random_transitions << " random + " << st.transitions - st.random_transitions << " scripted transitions, "
    << st.flips << " flips, " << st.violations << " violations, "
    << st.oracle_mismatch << " oracle mismatches";
  bool every_child_flipped = true;
  for (const auto& [child, eq] : model.equations()) every_child_flipped = every_child_flipped && st.flips_by_child.count(child) > 0;
  if (!every_child_flipped) d << ", some equation never flipped";
  return {st.random_transitions >= min_transitions && st.violations == 0 && st.oracle_mismatch == 0 && every_child_flipped,
          d.str()};
}

// -- CNF properties ---------------------------------------------------------------------

/// Brute-force CNF evaluation, independent of presca::evaluate.
inline bool cnf_value(const StructuralEquation& eq, const std::map<ConceptId, bool>& values) {
  for (const auto& clause : eq.cnf) {
    bool any = false;
    for (ConceptId c : clause) any = any || values.at(c);
    if (!any) return false;
  }
  return true;
}

inline CheckResult check_cnf_properties(const CausalModel& model) {
  std::size_t assignments = 0, monotone_fail = 0, eval_fail = 0, necessity_fail = 0;
  for (const auto& [child, eq] : model.equations()) {
    const auto lits = eq.literals();
    const std::size_t n = lits.size();
    std::map<ConceptId, bool> necessary;  // parent false forces child false, and the CNF is satisfiable
    for (ConceptId p : lits) necessary[p] = true;
    bool satisfiable = false;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      ++assignments;
      std::map<ConceptId, bool> values;
      ConceptAssignment a;
      for (std::size_t i = 0; i < n; ++i) {
        values[lits[i]] = (mask >> i) & 1u;
        a.set(lits[i], values[lits[i]]);
      }
      const bool v = cnf_value(eq, values);
      satisfiable = satisfiable || v;
      if (evaluate(eq, a) != v) ++eval_fail;
      for (std::size_t i = 0; i < n; ++i) {
        if ((mask >> i) & 1u) continue;
        auto up = values;
        up[lits[i]] = true;
        if (v && !cnf_value(eq, up)) ++monotone_fail;  // raising a literal never lowers the child
        if (v) necessary[lits[i]] = false;              // child true while this parent is false
      }
    }
    for (ConceptId p : lits) {
      const bool brute = satisfiable && necessary[p];
      bool unit = false;
      for (const auto& clause : eq.cnf) unit = unit || (clause.size() == 1 && clause.front() == p);
      if (brute != is_necessary_cause(model, p, child) || brute != unit) ++necessity_fail;
    }
  }
  std::ostringstream d;
  d << assignments << " assignments, " << eval_fail << " evaluation, " << monotone_fail << " monotonicity, "
    << necessity_fail << " necessity failures";
  return {assignments > 0 && eval_fail == 0 && monotone_fail == 0 && necessity_fail == 0, d.str()};
}

// -- budget and dedup ---------------------------------------------------------------------

/// Backend with scripted answers, so the cache must be what keeps labels stable.
class ScriptedOracle final : public OracleBackend {
 public:
  ScriptedOracle(BackendKind kind, std::uint64_t seed) : kind_(kind), rng_(seed) {}
  BackendKind kind() const override { return kind_; }
  bool label(const State&, ConceptId) override {
    ++calls;
    return uniform_real(rng_) < 0.5;
  }
  int calls = 0;

 private:
  BackendKind kind_;
  std::mt19937_64 rng_;
};

inline CheckResult check_budget_dedup(int cases = 1000, std::uint64_t seed = 7) {
  const GridWorld world;
  const auto maps = seed_maps(seed, 3);
  auto rng = make_rng(seed, {0xb0d});
  std::vector<State> pool;
  for (const auto& m : maps) {
    for (auto& s : run_random_episode(world, m, 40, rng)) pool.push_back(std::move(s));
  }
  int failures = 0;
  long queries = 0;
  std::string first_failure;
  auto fail = [&](int k, const std::string& why) {
    if (failures++ == 0) first_failure = "case " + std::to_string(k) + ": " + why;
  };
  for (int k = 0; k < cases; ++k) {
    const Budget budget{static_cast<int>(uniform_index(rng, 25)), static_cast<int>(uniform_index(rng, 25)), 1};
    QueryLedger ledger(budget, "case" + std::to_string(k));
    ScriptedOracle user(BackendKind::simulated, rng());
    ScriptedOracle model(BackendKind::learned, rng());
    std::map<std::pair<std::string, ConceptId>, bool> expect_cache;
    int pos = 0, neg = 0, hits = 0;
    std::size_t rows = 0;
    const int n = 20 + static_cast<int>(uniform_index(rng, 80));
    // Small state subsets make repeats likely.
    const std::size_t span = 5 + uniform_index(rng, 20);
    const std::size_t offset = uniform_index(rng, pool.size() - span);
    for (int q = 0; q < n; ++q) {
      ++queries;
      const State& s = pool[offset + uniform_index(rng, span)];
      const ConceptId c = uniform_index(rng, 2) ? ConceptId::in_storage_area : ConceptId::has_stick;
      const Charge charge = static_cast<Charge>(uniform_index(rng, 3));
      const bool advisory = uniform_index(rng, 5) == 0;
      OracleBackend& backend = advisory ? static_cast<OracleBackend&>(model) : user;
      const auto key = std::pair{canonical_string(s), c};
      const auto cached = expect_cache.find(key);
      const bool over = !advisory && cached == expect_cache.end() &&
                        ((charge == Charge::positive && pos >= budget.n_pos) ||
                         (charge == Charge::negative && neg >= budget.n_neg));
      bool threw = false;
      bool label = false;
      try {
        label = query(ledger, backend, s, c, charge);
      } catch (const BudgetExhausted&) {
        threw = true;
      }
      if (threw != over) fail(k, threw ? "unexpected BudgetExhausted" : "budget overrun not refused");
      if (threw) continue;
      if (cached != expect_cache.end()) {
        ++hits;
        if (label != cached->second) fail(k, "cached label changed");
        continue;
      }
      ++rows;
      if (advisory) continue;
      if (charge == Charge::positive) ++pos;
      if (charge == Charge::negative) ++neg;
      expect_cache.emplace(key, label);
    }
    if (ledger.spent_pos() != pos || ledger.spent_neg() != neg) fail(k, "charge counters disagree");
    if (ledger.spent_pos() > budget.n_pos || ledger.spent_neg() > budget.n_neg) fail(k, "budget ceiling exceeded");
    if (ledger.cache_hits() != hits) fail(k, "cache hit count disagrees");
    if (ledger.audit().size() != rows) fail(k, "audit row count disagrees");
    if (ledger.cache_size() != expect_cache.size()) fail(k, "learned answers leaked into the cache");
    std::stringstream io;
    write_audit(io, ledger);
    const AuditCheck check = replay_audit(read_audit(io), {});
    if (!check.ok() || check.charged_pos != pos || check.charged_neg != neg) fail(k, "audit replay disagrees");
  }
  std::ostringstream d;
  d << cases << " randomized streams, " << queries << " queries, " << failures << " failures";
  if (failures) d << " (" << first_failure << ")";
  return {failures == 0, d.str()};
}

// -- shaping identity -----------------------------------------------------------------------

inline CheckResult check_shaping_identity(const std::function<bool(const State&)>& predicate, double penalty,
                                          int episodes = 100, std::uint64_t seed = 7) {
  const GridWorld world;
  const auto maps = seed_maps(seed);
  const RewardFn base = environment_reward();
  const RewardFn shaped = shape_reward(base, predicate, penalty);
  auto rng = make_rng(seed, {0x5a});
  std::size_t transitions = 0, exact_fail = 0, diff_fail = 0, base_fail = 0, flagged = 0;
  for (int e = 0; e < episodes; ++e) {
    State s = world.initial_state(maps[static_cast<std::size_t>(e) % maps.size()]);
    for (int t = 0; t < 100; ++t) {
      const Action a = uniform_action(rng);
      const StepResult r = world.step(s, a);
      const double rb = base(s, a, r);
      const double rs = shaped(s, a, r);
      const double ind = predicate(r.next) ? 1.0 : 0.0;
      flagged += ind > 0;
      if (rb != r.reward) ++base_fail;
      if (rs != rb + penalty * ind) ++exact_fail;
      if (std::abs((rs - rb) - penalty * ind) > 1e-12) ++diff_fail;
      ++transitions;
      if (r.done) break;
      s = r.next;
    }
  }
  std::ostringstream d;
  d << transitions << " transitions (" << flagged << " flagged), " << exact_fail + diff_fail + base_fail
    << " mismatches";
  return {transitions > 0 && flagged > 0 && exact_fail == 0 && diff_fail == 0 && base_fail == 0, d.str()};
}

// -- Q-learning vs value iteration ---------------------------------------------------------

struct QvsVi {
  double q_start = 0.0;
  double v_start = 0.0;
  int greedy_length = -1;
  int bfs_length = -1;
  bool greedy_goal = false;
  long steps = 0;
};

inline QvsVi q_vs_vi(const EnvConfig& env, const QLearningConfig& cfg, std::uint64_t seed) {
  const GridWorld world(env);
  const State start = world.initial_state(mini_map());
  QvsVi out;
  out.v_start = value_iteration(world, start, cfg.gamma).v.at(config_key(start));
  LearningProblem problem;
  problem.starts = {start};
  problem.reward = environment_reward();
  problem.terminal = [](const StepResult& r) { return r.goal; };
  auto rng = make_rng(seed, {0x9});
  const QLearningResult q = q_learning(world, problem, cfg, rng);
  out.steps = q.steps;
  out.q_start = max_value(q.q.values(config_key(start)));
  const Rollout roll = greedy_rollout(world, q.q, start, env.episode_cap, problem.terminal, nullptr);
  out.greedy_goal = roll.goal;
  out.greedy_length = static_cast<int>(roll.actions.size());
  if (auto plan = shortest_plan(world, start, is_goal)) out.bfs_length = static_cast<int>(plan->size());
  return out;
}

inline CheckResult check_q_vs_vi(std::uint64_t seed = 7) {
  QLearningConfig cfg;
  // Full reward: values must match the oracle.
  const QvsVi full = q_vs_vi(EnvConfig{}, cfg, seed);
  // Goal reward only: the optimal plan is the shortest one, so BFS is the yardstick.
  EnvConfig plain;
  plain.rewards.pick_stick = plain.rewards.pick_plank = plain.rewards.pick_broken_ladder = 0.0;
  plain.rewards.craft = 0.0;
  const QvsVi shortest = q_vs_vi(plain, cfg, seed);
  const bool value_ok = std::abs(full.q_start - full.v_start) <= 1e-3 && std::abs(shortest.q_start - shortest.v_start) <= 1e-3;
  const bool plan_ok = shortest.greedy_goal && shortest.bfs_length > 0 && shortest.greedy_length <= shortest.bfs_length + 2;
  std::ostringstream d;
  d.precision(6);
  d << "|Q-V*| = " << std::abs(full.q_start - full.v_start) << " (full reward), "
    << std::abs(shortest.q_start - shortest.v_start) << " (goal only); greedy " << shortest.greedy_length
    << " vs BFS " << shortest.bfs_length;
  return {value_ok && plan_ok, d.str()};
}

// -- gradient check ---------------------------------------------------------------------------

inline double gradient_relative_error(Mlp net, const std::vector<Example>& batch) {
  Mlp grad = net.zeros_like();
  cross_entropy(net, batch, &grad);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t p = 0; p < net.parameter_count(); ++p) {
    const double keep = net.parameter(p);
    net.parameter(p) = keep + h;
    const double up = cross_entropy(net, batch);
    net.parameter(p) = keep - h;
    const double down = cross_entropy(net, batch);
    net.parameter(p) = keep;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grad.parameter(p);
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    if (scale < 1e-7) continue;  // both vanish; relative error is meaningless
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  return worst;
}

inline CheckResult check_gradients(int batches = 20, std::uint64_t seed = 7) {
  auto rng = make_rng(seed, {0x67});
  double worst = 0.0;
  for (int b = 0; b < batches; ++b) {
    const bool cellwise = b % 2 == 0;
    const int cells = 9, channels = 3, tail = 4, hidden = 5;
    const int inputs = cellwise ? cells * channels + tail : 12;
    Mlp net = cellwise ? Mlp::random_cellwise(cells, channels, tail, hidden, rng) : Mlp::random(inputs, hidden, rng);
    for (std::size_t p = 0; p < net.parameter_count(); ++p) net.parameter(p) += 0.1 * (uniform_real(rng) - 0.5);
    std::vector<Example> batch(8);
    for (auto& ex : batch) {
      ex.x.resize(static_cast<std::size_t>(inputs));
      for (double& v : ex.x) v = uniform_real(rng);
      ex.label = static_cast<int>(uniform_index(rng, 2));
    }
    worst = std::max(worst, gradient_relative_error(net, batch));
  }
  std::ostringstream d;
  d << batches << " random batches (dense and cellwise), worst relative error " << worst;
  return {worst < 1e-4, d.str()};
}

}  // namespace presca::testing
