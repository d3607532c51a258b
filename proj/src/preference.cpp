#include "presca/preference.hpp"

#include <algorithm>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "presca/error.hpp"
#include "presca/rng.hpp"

namespace presca {

std::string_view preference_kind_name(PreferenceKind k) { return k == PreferenceKind::avoid ? "avoid" : "achieve"; }

CachedPredictor::CachedPredictor(ClassifierPtr clf)
    : clf_(std::move(clf)), memo_(std::make_shared<std::unordered_map<std::uint64_t, bool>>()) {
  if (!clf_) throw Error("predictor needs a classifier");
}

bool CachedPredictor::operator()(const State& s) const {
  const std::uint64_t key = config_key(s) | (static_cast<std::uint64_t>(s.map->id) << 40);
  if (auto it = memo_->find(key); it != memo_->end()) return it->second;
  const bool v = clf_->predict(s);
  memo_->emplace(key, v);
  return v;
}

RewardFn environment_reward() {
  return [](const State&, Action, const StepResult& r) { return r.reward; };
}

RewardFn shape_reward(RewardFn base, std::function<bool(const State&)> predicate, double penalty) {
  if (!(penalty < 0)) throw Error("avoid penalty must be negative");
  return [base = std::move(base), predicate = std::move(predicate), penalty](const State& s, Action a,
                                                                             const StepResult& r) {
    return base(s, a, r) + (predicate(r.next) ? penalty : 0.0);
  };
}

const ActionValues& QTable::values(std::uint64_t key) const {
  auto it = table_.find(key);
  return it == table_.end() ? fallback_ : it->second;
}

double max_value(const ActionValues& v) { return *std::max_element(v.begin(), v.end()); }

Action greedy_action(const ActionValues& v, std::mt19937_64* rng) {
  const double best = max_value(v);
  if (rng == nullptr) return static_cast<Action>(std::max_element(v.begin(), v.end()) - v.begin());
  int ties[kNumActions];
  int n = 0;
  for (int a = 0; a < kNumActions; ++a)
    if (v[a] == best) ties[n++] = a;
  return static_cast<Action>(ties[n == 1 ? 0 : uniform_index(*rng, n)]);
}

void QLearningConfig::validate() const {
  if (!(gamma > 0 && gamma <= 1)) throw Error("q-learning: gamma must be in (0, 1]");
  if (!(alpha > 0 && alpha <= 1)) throw Error("q-learning: alpha must be in (0, 1]");
  if (epsilon_start < 0 || epsilon_start > 1 || epsilon_end < 0 || epsilon_end > 1)
    throw Error("q-learning: epsilon must be in [0, 1]");
  if (max_steps < 1 || episode_cap < 1) throw Error("q-learning: step caps must be >= 1");
  if (check_interval < 0 || stable_checks < 0 || replay_passes < 0 || planning_sweeps < 0) throw Error("q-learning: check settings must be >= 0");
}

std::uint64_t QLearningConfig::hash() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g|%.17g|%.17g|%.17g|%.17g|%ld|%ld|%d|%d|%.17g|%d|%d|%d", gamma, alpha,
                initial_value, epsilon_start, epsilon_end, epsilon_decay_steps, max_steps, replay_passes,
                planning_sweeps, planning_tolerance, episode_cap, check_interval, stable_checks);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = buf; *p; ++p) h = (h ^ static_cast<unsigned char>(*p)) * 0x100000001b3ULL;
  return h;
}

Rollout greedy_rollout(const GridWorld& world, const QTable& q, const State& start, int cap,
                       const std::function<bool(const StepResult&)>& terminal, std::mt19937_64* tie_rng) {
  Rollout out;
  State s = start;
  out.states.push_back(s);
  for (int t = 0; t < cap; ++t) {
    const Action a = greedy_action(q.values(config_key(s)), tie_rng);
    StepResult r = world.step(s, a);
    out.actions.push_back(a);
    out.rewards.push_back(r.reward);
    out.states.push_back(r.next);
    out.goal = out.goal || r.goal;
    const bool stop = terminal(r);
    s = std::move(r.next);
    if (stop) break;
  }
  return out;
}

QLearningResult q_learning(const GridWorld& world, const LearningProblem& problem, const QLearningConfig& cfg,
                           std::mt19937_64& rng) {
  cfg.validate();
  if (problem.starts.empty() && !problem.primary_start) throw Error("q-learning needs a start state");
  QLearningResult res;
  res.q = QTable(cfg.initial_value);
  std::set<std::uint64_t> terminal_seen;
  const State& check_start = problem.primary_start ? *problem.primary_start : problem.starts.front();

  auto epsilon_at = [&](long t) {
    if (cfg.epsilon_decay_steps <= 0) return cfg.epsilon_end;
    const double f = std::min(1.0, static_cast<double>(t) / static_cast<double>(cfg.epsilon_decay_steps));
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * f;
  };

  struct Transition {
    std::uint64_t key;
    Action action;
    double reward;
    std::uint64_t next;
    bool terminal;
  };
  std::vector<Transition> episode;
  struct Edge {
    std::uint64_t next = 0;
    double reward = 0.0;
    bool terminal = false;
    bool known = false;
  };
  std::unordered_map<std::uint64_t, std::array<Edge, kNumActions>> model;
  std::vector<std::uint64_t> model_order;
  auto plan = [&] {
    for (int sweep = 0; sweep < cfg.planning_sweeps; ++sweep) {
      double delta = 0.0;
      for (auto it = model_order.rbegin(); it != model_order.rend(); ++it) {
        const auto& edges = model.at(*it);
        ActionValues& q = res.q.mutable_values(*it);
        for (int a = 0; a < kNumActions; ++a) {
          if (!edges[a].known) continue;
          const double v =
              edges[a].reward + (edges[a].terminal ? 0.0 : cfg.gamma * max_value(res.q.values(edges[a].next)));
          delta = std::max(delta, std::abs(v - q[a]));
          q[a] = v;
        }
      }
      if (delta < cfg.planning_tolerance) break;
    }
  };
  std::vector<Action> last_plan;
  int stable = 0;
  double return_sum = 0.0;
  int return_count = 0;

  while (res.steps < cfg.max_steps) {
    State s;
    if (problem.primary_start && (problem.starts.empty() || (rng() & 1)))
      s = *problem.primary_start;
    else
      s = problem.starts[uniform_index(rng, problem.starts.size())];
    s.step_count = 0;
    double ret = 0.0;
    episode.clear();
    for (int t = 0; t < cfg.episode_cap && res.steps < cfg.max_steps; ++t) {
      const std::uint64_t key = config_key(s);
      const double eps = epsilon_at(res.steps);
      Action a;
      if (uniform_real(rng) < eps)
        a = uniform_action(rng);
      else
        a = greedy_action(res.q.values(key), &rng);
      StepResult r = world.step(s, a);
      ++res.steps;
      const double reward = problem.reward(s, a, r);
      const bool term = problem.terminal(r);
      const double target = reward + (term ? 0.0 : cfg.gamma * max_value(res.q.values(config_key(r.next))));
      double& qa = res.q.mutable_values(key)[static_cast<int>(a)];
      qa += cfg.alpha * (target - qa);
      ret += reward;
      if (cfg.replay_passes > 0) episode.push_back({key, a, reward, config_key(r.next), term});
      if (cfg.planning_sweeps > 0) {
        auto [m, fresh] = model.try_emplace(key);
        if (fresh) model_order.push_back(key);
        m->second[static_cast<int>(a)] = {config_key(r.next), reward, term, true};
      }
      if (term) {
        if (res.terminal_states.size() < 256 && terminal_seen.insert(config_key(r.next)).second) {
          State done = r.next;
          done.step_count = 0;
          res.terminal_states.push_back(std::move(done));
        }
        break;
      }
      s = std::move(r.next);
    }
    for (int pass = 0; pass < cfg.replay_passes; ++pass) {
      for (auto it = episode.rbegin(); it != episode.rend(); ++it) {
        const double target = it->reward + (it->terminal ? 0.0 : cfg.gamma * max_value(res.q.values(it->next)));
        double& qa = res.q.mutable_values(it->key)[static_cast<int>(it->action)];
        qa += cfg.alpha * (target - qa);
      }
    }
    ++res.episodes;
    return_sum += ret;
    ++return_count;

    if (cfg.check_interval > 0 && res.episodes % cfg.check_interval == 0) {
      plan();
      Rollout g = greedy_rollout(world, res.q, check_start, cfg.episode_cap, problem.terminal, nullptr);
      CurvePoint pt;
      pt.steps = res.steps;
      pt.episodes = res.episodes;
      pt.epsilon = epsilon_at(res.steps);
      pt.mean_return = return_sum / return_count;
      State prev = check_start;
      for (std::size_t i = 0; i < g.actions.size(); ++i) {
        StepResult r = world.step(prev, g.actions[i]);
        pt.greedy_return += problem.reward(prev, g.actions[i], r);
        pt.greedy_terminated = problem.terminal(r);
        prev = std::move(r.next);
      }
      pt.greedy_length = static_cast<int>(g.actions.size());
      res.curve.push_back(pt);
      return_sum = 0.0;
      return_count = 0;

      stable = pt.greedy_terminated && g.actions == last_plan ? stable + 1 : 0;
      last_plan = std::move(g.actions);
      if (cfg.stable_checks > 0 && stable >= cfg.stable_checks) {
        res.converged = true;
        break;
      }
    }
  }
  plan();
  return res;
}

bool PolicyBundle::converged() const {
  return std::all_of(diagnostics.begin(), diagnostics.end(), [](const MapTraining& m) { return m.converged; });
}

long PolicyBundle::total_steps() const {
  long n = 0;
  for (const auto& m : diagnostics) n += m.steps;
  return n;
}

namespace {

MapTraining diagnostics_of(int map_id, std::string table, QLearningResult& r) {
  MapTraining d;
  d.map_id = map_id;
  d.table = std::move(table);
  d.steps = r.steps;
  d.episodes = r.episodes;
  d.converged = r.converged;
  d.curve = std::move(r.curve);
  return d;
}

}  // namespace

PolicyBundle train_flat_policy(const GridWorld& world, const std::vector<MapPtr>& maps, const RewardFn& reward,
                               const QLearningConfig& cfg, std::uint64_t seed, std::string label) {
  if (maps.empty()) throw Error("train_flat_policy needs at least one map");
  PolicyBundle bundle;
  bundle.kind = PolicyBundle::Kind::flat;
  bundle.label = std::move(label);
  bundle.config_hash = cfg.hash();
  for (const auto& map : maps) {
    LearningProblem p;
    p.starts = {world.initial_state(map)};
    p.reward = reward;
    p.terminal = [](const StepResult& r) { return r.goal; };
    auto rng = make_rng(seed, {static_cast<std::uint64_t>(map->id), 0xf1a7});
    QLearningResult r = q_learning(world, p, cfg, rng);
    bundle.diagnostics.push_back(diagnostics_of(map->id, "flat", r));
    bundle.flat.emplace(map->id, std::move(r.q));
  }
  return bundle;
}

RewardFn option_reward(const RewardConfig& rewards, std::function<bool(const State&)> termination) {
  return [rewards, termination = std::move(termination)](const State&, Action, const StepResult& r) {
    double v = -rewards.step_cost;
    if (termination(r.next))
      v += 1.0;
    else if (r.event == Event::dropped)
      v += rewards.drop_penalty;
    return v;
  };
}

QLearningResult train_option(const GridWorld& world, const std::vector<State>& starts,
                             const std::function<bool(const State&)>& termination, const QLearningConfig& cfg,
                             std::mt19937_64& rng) {
  if (starts.empty()) throw Error("train_option needs a start state");
  LearningProblem p;
  p.primary_start = starts.front();
  p.starts.assign(starts.begin() + 1, starts.end());
  p.reward = option_reward(world.config().rewards, termination);
  // The goal is absorbing, so it also ends an option that has not terminated.
  p.terminal = [termination](const StepResult& r) { return r.goal || termination(r.next); };
  if (termination(starts.front())) {
    // Zero-length option: nothing to learn from this start.
    QLearningResult res;
    res.converged = true;
    res.terminal_states.push_back(starts.front());
    if (p.starts.empty()) return res;
    p.primary_start.reset();
  }
  return q_learning(world, p, cfg, rng);
}

PolicyBundle train_achieve_policy(const GridWorld& world, const std::vector<MapPtr>& maps, ClassifierPtr target,
                                  const QLearningConfig& cfg, std::uint64_t seed) {
  if (maps.empty()) throw Error("train_achieve_policy needs at least one map");
  PolicyBundle bundle;
  bundle.kind = PolicyBundle::Kind::options;
  bundle.label = "achieve:" + std::string(concept_name(target->concept_id()));
  bundle.config_hash = cfg.hash();
  bundle.switch_concept = target->concept_id();
  bundle.switch_classifier = target;
  CachedPredictor predicted(target);
  auto termination_t = [predicted](const State& s) { return predicted(s); };
  auto termination_g = [](const State& s) { return is_goal(s); };

  for (const auto& map : maps) {
    const auto id = static_cast<std::uint64_t>(map->id);
    const State init = world.initial_state(map);
    auto rng_t = make_rng(seed, {id, 0x07});
    QLearningResult ot = train_option(world, {init}, termination_t, cfg, rng_t);

    // O_G starts where O_T ends: its greedy end state first, then any other
    // termination state seen while training O_T.
    std::vector<State> starts;
    auto t_terminal = [&](const StepResult& r) { return r.goal || termination_t(r.next); };
    Rollout g = greedy_rollout(world, ot.q, init, cfg.episode_cap, t_terminal, nullptr);
    if (termination_t(g.states.back())) {
      State end = g.states.back();
      end.step_count = 0;
      starts.push_back(std::move(end));
    }
    for (const auto& s : ot.terminal_states)
      if (!is_goal(s) && (starts.empty() || config_key(s) != config_key(starts.front()))) starts.push_back(s);
    if (starts.empty()) starts.push_back(init);

    auto rng_g = make_rng(seed, {id, 0x06});
    QLearningResult og = train_option(world, starts, termination_g, cfg, rng_g);

    bundle.diagnostics.push_back(diagnostics_of(map->id, "option_target", ot));
    bundle.diagnostics.push_back(diagnostics_of(map->id, "option_goal", og));
    bundle.option_target.emplace(map->id, std::move(ot.q));
    bundle.option_goal.emplace(map->id, std::move(og.q));
  }
  return bundle;
}

MetaController::MetaController(const PolicyBundle& bundle) : bundle_(bundle), predictor_(bundle.switch_classifier) {
  if (bundle.kind != PolicyBundle::Kind::options) throw Error("meta controller needs an option bundle");
}

void MetaController::reset() {
  switched_ = false;
  switches_ = 0;
}

Action MetaController::act(const State& s, std::mt19937_64& rng) {
  if (!switched_ && predictor_(s)) {
    switched_ = true;
    ++switches_;
  }
  const auto& tables = switched_ ? bundle_.option_goal : bundle_.option_target;
  auto it = tables.find(s.map->id);
  if (it == tables.end()) return Action::no_op;
  return greedy_action(it->second.values(config_key(s)), &rng);
}

Action flat_action(const PolicyBundle& bundle, const State& s, std::mt19937_64& rng) {
  auto it = bundle.flat.find(s.map->id);
  if (it == bundle.flat.end()) return Action::no_op;
  return greedy_action(it->second.values(config_key(s)), &rng);
}

// -- persistence ---------------------------------------------------------------

namespace {

const char* kind_name(PolicyBundle::Kind k) { return k == PolicyBundle::Kind::flat ? "flat" : "options"; }

void write_table(std::ostream& out, const char* name, int map_id, const QTable& q) {
  std::vector<std::uint64_t> keys;
  keys.reserve(q.size());
  for (const auto& [k, _] : q.entries()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", q.initial_value());
  out << "table " << name << ' ' << map_id << ' ' << keys.size() << ' ' << buf << '\n';
  for (auto k : keys) {
    std::snprintf(buf, sizeof buf, "%016" PRIx64, k);
    out << buf;
    for (double v : q.values(k)) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace

void write_policy(std::ostream& out, const PolicyBundle& bundle, const std::vector<MapPtr>& maps) {
  out << "presca-policy 1\n";
  out << "kind " << kind_name(bundle.kind) << '\n';
  out << "label " << bundle.label << '\n';
  out << "config " << hex_hash(bundle.config_hash) << '\n';
  if (bundle.kind == PolicyBundle::Kind::options) out << "switch " << concept_name(bundle.switch_concept) << '\n';
  for (const auto& m : maps) out << "map " << m->id << ' ' << hex_hash(map_fingerprint(*m)) << '\n';
  for (const auto& [id, q] : bundle.flat) write_table(out, "flat", id, q);
  for (const auto& [id, q] : bundle.option_target) write_table(out, "option_target", id, q);
  for (const auto& [id, q] : bundle.option_goal) write_table(out, "option_goal", id, q);
  out << "end\n";
}

PolicyBundle read_policy(std::istream& in, ClassifierPtr switch_classifier) {
  PolicyBundle b;
  std::string line;
  int lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next() || line != "presca-policy 1") throw ParseError(1, "not a policy file");
  bool ended = false;
  while (next()) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "kind") {
      std::string k;
      ls >> k;
      if (k == "flat") b.kind = PolicyBundle::Kind::flat;
      else if (k == "options") b.kind = PolicyBundle::Kind::options;
      else throw ParseError(lineno, "unknown policy kind '" + k + "'");
    } else if (tag == "label") {
      std::getline(ls >> std::ws, b.label);
    } else if (tag == "config") {
      std::string h;
      ls >> h;
      b.config_hash = std::stoull(h, nullptr, 16);
    } else if (tag == "switch") {
      std::string c;
      ls >> c;
      auto id = parse_concept(c);
      if (!id) throw ParseError(lineno, "unknown concept '" + c + "'");
      b.switch_concept = *id;
    } else if (tag == "map") {
      int id = 0;
      std::string fp;
      if (!(ls >> id >> fp)) throw ParseError(lineno, "malformed map line");
      b.map_fingerprints[id] = std::stoull(fp, nullptr, 16);
    } else if (tag == "table") {
      std::string name;
      int map_id = 0;
      std::size_t count = 0;
      double initial = 0.0;
      if (!(ls >> name >> map_id >> count >> initial)) throw ParseError(lineno, "malformed table header");
      std::map<int, QTable>* dest = name == "flat"            ? &b.flat
                                    : name == "option_target" ? &b.option_target
                                    : name == "option_goal"   ? &b.option_goal
                                                              : nullptr;
      if (!dest) throw ParseError(lineno, "unknown table '" + name + "'");
      QTable& q = dest->insert_or_assign(map_id, QTable(initial)).first->second;
      q.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (!next()) throw ParseError(lineno, "truncated table");
        std::istringstream row(line);
        std::string key;
        row >> key;
        ActionValues& v = q.mutable_values(std::stoull(key, nullptr, 16));
        for (double& x : v)
          if (!(row >> x)) throw ParseError(lineno, "expected 7 action values");
      }
    } else if (tag == "end") {
      ended = true;
      break;
    } else if (!tag.empty()) {
      throw ParseError(lineno, "unexpected '" + tag + "'");
    }
  }
  if (!ended) throw ParseError(lineno, "missing end marker");
  if (b.kind == PolicyBundle::Kind::options) {
    if (!switch_classifier) throw Error("option policy needs the classifier for " +
                                        std::string(concept_name(b.switch_concept)));
    if (switch_classifier->concept_id() != b.switch_concept) throw Error("switch classifier concept mismatch");
    b.switch_classifier = std::move(switch_classifier);
  }
  return b;
}

void save_policy(const std::string& path, const PolicyBundle& bundle, const std::vector<MapPtr>& maps) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_policy(out, bundle, maps);
}

PolicyBundle load_policy(const std::string& path, ClassifierPtr switch_classifier) {
  std::ifstream in(path);
  if (!in) throw Error("policy not found: " + path);
  return read_policy(in, std::move(switch_classifier));
}

void write_training_curves(std::ostream& out, const PolicyBundle& bundle) {
  out << "map_id,table,steps,episodes,epsilon,mean_return,greedy_return,greedy_length,greedy_terminated\n";
  char buf[256];
  for (const auto& d : bundle.diagnostics) {
    for (const auto& p : d.curve) {
      std::snprintf(buf, sizeof buf, "%d,%s,%ld,%d,%.4f,%.6f,%.6f,%d,%d\n", d.map_id, d.table.c_str(), p.steps,
                    p.episodes, p.epsilon, p.mean_return, p.greedy_return, p.greedy_length,
                    p.greedy_terminated ? 1 : 0);
      out << buf;
    }
  }
}

}  // namespace presca
