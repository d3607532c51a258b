#include "presca/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "presca/error.hpp"
#include "presca/rng.hpp"

namespace presca {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t { kTagChain = 1, kTagInterface, kTagPolicy, kTagEvaluation, kTagHeldOut };

double round_to(double v, int decimals) {
  const double f = std::pow(10.0, decimals);
  return std::round(v * f) / f;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error("config: '" + where + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error("config: unknown key '" + k + "' in " + where);
  }
}

json budget_json(const Budget& b) { return {{"n_pos", b.n_pos}, {"n_neg", b.n_neg}, {"min_seed", b.min_seed}}; }

Budget budget_from(const json& j, Budget b) {
  check_keys(j, {"n_pos", "n_neg", "min_seed"}, "budget");
  read(j, "n_pos", b.n_pos);
  read(j, "n_neg", b.n_neg);
  read(j, "min_seed", b.min_seed);
  return b;
}

ConceptId concept_at(const json& j, const char* key, ConceptId fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : concept_from_name(it->get<std::string>());
}

void log_line(const RunHooks& hooks, const std::string& msg) {
  if (hooks.log) hooks.log(msg);
}

}  // namespace

// -- configuration ----------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (map_count < 1) throw Error("config: maps.count must be >= 1");
  if (trials < 1) throw Error("config: trials must be >= 1");
  if (evaluation_states < 0) throw Error("config: evaluation_states must be >= 0");
  if (env.episode_cap < 1) throw Error("config: env.episode_cap must be >= 1");
  if (preference.kind == PreferenceKind::avoid && !(preference.penalty < 0))
    throw Error("config: avoid preference needs a negative penalty");
  if (!baseline && known == target) throw Error("config: known and target concepts coincide");
  acquisition.validate();
  q_learning.validate();
}

std::string config_to_text(const ExperimentConfig& c) {
  const auto& r = c.env.rewards;
  const auto& a = c.acquisition;
  const auto& t = c.training;
  const auto& q = c.q_learning;
  json j = {
      {"schema", "presca.experiment"},
      {"version", ExperimentConfig::kVersion},
      {"master_seed", c.master_seed},
      {"maps",
       {{"count", c.map_count},
        {"width", c.generation.width},
        {"height", c.generation.height},
        {"storage_width", c.generation.storage_width},
        {"storage_height", c.generation.storage_height},
        {"max_retries", c.generation.max_retries}}},
      {"env",
       {{"episode_cap", c.env.episode_cap},
        {"rewards",
         {{"goal", r.goal},
          {"step_cost", r.step_cost},
          {"pick_stick", r.pick_stick},
          {"pick_plank", r.pick_plank},
          {"pick_broken_ladder", r.pick_broken_ladder},
          {"craft", r.craft},
          {"drop_penalty", r.drop_penalty}}}}},
      {"known", concept_name(c.known)},
      {"target", concept_name(c.target)},
      {"preference",
       {{"kind", preference_kind_name(c.preference.kind)},
        {"concept", concept_name(c.preference.concept_id)},
        {"penalty", c.preference.penalty}}},
      {"baseline", c.baseline},
      {"acquisition",
       {{"episode_length", a.episode_length},
        {"seed_episode_length", a.seed_episode_length},
        {"random_walk_length", a.random_walk_length},
        {"total_episodes", a.total_episodes},
        {"max_seed_episodes", a.max_seed_episodes},
        {"max_idle_walks", a.max_idle_walks},
        {"intermediate_budget", budget_json(a.intermediate_budget)},
        {"target_budget", budget_json(a.target_budget)}}},
      {"training",
       {{"epochs", t.epochs},
        {"learning_rate", t.learning_rate},
        {"hidden", t.hidden},
        {"architecture", architecture_name(t.architecture)},
        {"batch_size", t.batch_size},
        {"loss_threshold", t.loss_threshold},
        {"reduction", t.reduction == LossReduction::sum ? "sum" : "mean"},
        {"max_reinits", t.max_reinits},
        {"input", t.input == InputMode::encoding ? "encoding" : "image"}}},
      {"q_learning",
       {{"gamma", q.gamma},
        {"alpha", q.alpha},
        {"initial_value", q.initial_value},
        {"epsilon_start", q.epsilon_start},
        {"epsilon_end", q.epsilon_end},
        {"epsilon_decay_steps", q.epsilon_decay_steps},
        {"max_steps", q.max_steps},
        {"replay_passes", q.replay_passes},
        {"planning_sweeps", q.planning_sweeps},
        {"planning_tolerance", q.planning_tolerance},
        {"episode_cap", q.episode_cap},
        {"check_interval", q.check_interval},
        {"stable_checks", q.stable_checks}}},
      {"trials", c.trials},
      {"evaluation_states", c.evaluation_states},
      {"output_dir", c.output_dir},
      {"save_policies", c.save_policies},
      {"save_datasets", c.save_datasets},
  };
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(1, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j,
               {"schema", "version", "master_seed", "maps", "env", "known", "target", "preference", "baseline",
                "acquisition", "training", "q_learning", "trials", "evaluation_states", "output_dir",
                "save_policies", "save_datasets"},
               "config");
    if (j.contains("schema") && j["schema"] != "presca.experiment") throw Error("config: unexpected schema");
    if (j.value("version", ExperimentConfig::kVersion) != ExperimentConfig::kVersion)
      throw Error("config: unsupported version");
    read(j, "master_seed", c.master_seed);
    if (auto m = j.find("maps"); m != j.end()) {
      check_keys(*m, {"count", "width", "height", "storage_width", "storage_height", "max_retries"}, "maps");
      read(*m, "count", c.map_count);
      read(*m, "width", c.generation.width);
      read(*m, "height", c.generation.height);
      read(*m, "storage_width", c.generation.storage_width);
      read(*m, "storage_height", c.generation.storage_height);
      read(*m, "max_retries", c.generation.max_retries);
    }
    if (auto e = j.find("env"); e != j.end()) {
      check_keys(*e, {"episode_cap", "rewards"}, "env");
      read(*e, "episode_cap", c.env.episode_cap);
      if (auto r = e->find("rewards"); r != e->end()) {
        auto& w = c.env.rewards;
        check_keys(*r, {"goal", "step_cost", "pick_stick", "pick_plank", "pick_broken_ladder", "craft", "drop_penalty"},
                   "env.rewards");
        read(*r, "goal", w.goal);
        read(*r, "step_cost", w.step_cost);
        read(*r, "pick_stick", w.pick_stick);
        read(*r, "pick_plank", w.pick_plank);
        read(*r, "pick_broken_ladder", w.pick_broken_ladder);
        read(*r, "craft", w.craft);
        read(*r, "drop_penalty", w.drop_penalty);
      }
    }
    c.known = concept_at(j, "known", c.known);
    c.target = concept_at(j, "target", c.target);
    if (auto p = j.find("preference"); p != j.end()) {
      check_keys(*p, {"kind", "concept", "penalty"}, "preference");
      if (auto k = p->find("kind"); k != p->end()) {
        const auto kind = k->get<std::string>();
        if (kind == "avoid") c.preference.kind = PreferenceKind::avoid;
        else if (kind == "achieve") c.preference.kind = PreferenceKind::achieve;
        else throw Error("config: preference.kind must be avoid or achieve");
      }
      c.preference.concept_id = concept_at(*p, "concept", c.preference.concept_id);
      read(*p, "penalty", c.preference.penalty);
    }
    read(j, "baseline", c.baseline);
    if (auto a = j.find("acquisition"); a != j.end()) {
      check_keys(*a,
                 {"episode_length", "seed_episode_length", "random_walk_length", "total_episodes", "max_seed_episodes",
                  "max_idle_walks", "intermediate_budget", "target_budget"},
                 "acquisition");
      auto& x = c.acquisition;
      read(*a, "episode_length", x.episode_length);
      read(*a, "seed_episode_length", x.seed_episode_length);
      read(*a, "random_walk_length", x.random_walk_length);
      read(*a, "total_episodes", x.total_episodes);
      read(*a, "max_seed_episodes", x.max_seed_episodes);
      read(*a, "max_idle_walks", x.max_idle_walks);
      if (a->contains("intermediate_budget")) x.intermediate_budget = budget_from((*a)["intermediate_budget"], x.intermediate_budget);
      if (a->contains("target_budget")) x.target_budget = budget_from((*a)["target_budget"], x.target_budget);
    }
    if (auto t = j.find("training"); t != j.end()) {
      check_keys(*t,
                 {"epochs", "learning_rate", "hidden", "architecture", "batch_size", "loss_threshold", "reduction",
                  "max_reinits", "input"},
                 "training");
      auto& x = c.training;
      read(*t, "epochs", x.epochs);
      read(*t, "learning_rate", x.learning_rate);
      read(*t, "hidden", x.hidden);
      read(*t, "batch_size", x.batch_size);
      read(*t, "loss_threshold", x.loss_threshold);
      read(*t, "max_reinits", x.max_reinits);
      if (auto r = t->find("reduction"); r != t->end()) {
        const auto v = r->get<std::string>();
        if (v != "sum" && v != "mean") throw Error("config: training.reduction must be sum or mean");
        x.reduction = v == "sum" ? LossReduction::sum : LossReduction::mean;
      }
      if (auto a = t->find("architecture"); a != t->end()) {
        const auto v = a->get<std::string>();
        if (v != "dense" && v != "cellwise") throw Error("config: training.architecture must be dense or cellwise");
        x.architecture = v == "dense" ? Architecture::dense : Architecture::cellwise;
      }
      if (auto i = t->find("input"); i != t->end()) {
        const auto v = i->get<std::string>();
        if (v != "encoding" && v != "image") throw Error("config: training.input must be encoding or image");
        x.input = v == "encoding" ? InputMode::encoding : InputMode::image;
      }
    }
    if (auto q = j.find("q_learning"); q != j.end()) {
      check_keys(*q,
                 {"gamma", "alpha", "initial_value", "epsilon_start", "epsilon_end", "epsilon_decay_steps",
                  "max_steps", "replay_passes", "planning_sweeps", "planning_tolerance", "episode_cap",
                  "check_interval", "stable_checks"},
                 "q_learning");
      auto& x = c.q_learning;
      read(*q, "gamma", x.gamma);
      read(*q, "alpha", x.alpha);
      read(*q, "initial_value", x.initial_value);
      read(*q, "epsilon_start", x.epsilon_start);
      read(*q, "epsilon_end", x.epsilon_end);
      read(*q, "epsilon_decay_steps", x.epsilon_decay_steps);
      read(*q, "max_steps", x.max_steps);
      read(*q, "replay_passes", x.replay_passes);
      read(*q, "planning_sweeps", x.planning_sweeps);
      read(*q, "planning_tolerance", x.planning_tolerance);
      read(*q, "episode_cap", x.episode_cap);
      read(*q, "check_interval", x.check_interval);
      read(*q, "stable_checks", x.stable_checks);
    }
    read(j, "trials", c.trials);
    read(j, "evaluation_states", c.evaluation_states);
    read(j, "output_dir", c.output_dir);
    read(j, "save_policies", c.save_policies);
    read(j, "save_datasets", c.save_datasets);
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

// -- evaluation -------------------------------------------------------------------

bool episode_aligned(const std::vector<State>& states, const Preference& preference) {
  bool visited = false;
  for (const auto& s : states) visited = visited || ground_truth(preference.concept_id, s);
  return preference.kind == PreferenceKind::avoid ? !visited : visited;
}

EvalMetrics evaluate_policy(const GridWorld& world, const PolicyBundle& bundle, const std::vector<MapPtr>& maps,
                            int trials, const Preference& preference, std::uint64_t seed) {
  if (trials < 1) throw Error("evaluate_policy: trials must be >= 1");
  EvalMetrics m;
  const int cap = world.config().episode_cap;
  double steps_all = 0.0;
  for (const auto& map : maps) {
    MapEval pm;
    pm.map_id = map->id;
    for (int t = 0; t < trials; ++t) {
      auto rng = make_rng(seed, {static_cast<std::uint64_t>(map->id), static_cast<std::uint64_t>(t)});
      std::optional<MetaController> meta;
      std::optional<PredictionBlocker> blocked;
      if (bundle.kind == PolicyBundle::Kind::options)
        meta.emplace(bundle);
      else
        blocked.emplace();  // flat policies act without any classifier
      std::vector<State> states{world.initial_state(map)};
      bool goal = false;
      int steps = 0;
      while (steps < cap) {
        const State& s = states.back();
        const Action a = meta ? meta->act(s, rng) : flat_action(bundle, s, rng);
        StepResult r = world.step(s, a);
        ++steps;
        states.push_back(std::move(r.next));
        if (r.goal) {
          goal = true;
          break;
        }
      }
      PredictionBlocker metric_guard;
      const bool aligned = episode_aligned(states, preference);
      ++pm.episodes;
      pm.aligned_any += aligned;
      steps_all += steps;
      if (goal) {
        ++pm.successes;
        pm.aligned += aligned;
        pm.steps += steps;
      }
    }
    m.episodes += pm.episodes;
    m.successes += pm.successes;
    m.aligned += pm.aligned;
    m.aligned_any += pm.aligned_any;
    m.avg_steps += pm.steps;
    m.per_map.push_back(pm);
  }
  m.zero_success = m.successes == 0;
  m.goal_pct = 100.0 * m.successes / m.episodes;
  m.aligned_pct = m.zero_success ? 0.0 : 100.0 * m.aligned / m.successes;
  m.aligned_pct_all = 100.0 * m.aligned_any / m.episodes;
  m.avg_steps = m.zero_success ? 0.0 : m.avg_steps / m.successes;
  m.avg_steps_all = steps_all / m.episodes;
  return m;
}

RouteValues route_values(const GridWorld& world, const MapPtr& map, double gamma) {
  RouteValues v;
  v.map_id = map->id;
  const State start = world.initial_state(map);
  auto goal = [](const State& s) { return is_goal(s); };
  auto craft = [](const State& from, Action a, const StepResult& r) {
    return no_spurious_drop(from, a, r) && !ground_truth(ConceptId::in_storage_area, r.next);
  };
  auto repair = [](const State& from, Action a, const StepResult& r) {
    return no_spurious_drop(from, a, r) && r.event != Event::picked_stick && r.event != Event::picked_plank;
  };
  auto score = [&](const TransitionFilter& f, int& length, double& ret) {
    auto plan = shortest_plan(world, start, goal, f);
    if (!plan) return;
    length = static_cast<int>(plan->size());
    State s = start;
    double g = 1.0;
    for (Action a : *plan) {
      StepResult r = world.step(s, a);
      ret += g * r.reward;
      g *= gamma;
      s = std::move(r.next);
    }
  };
  score(craft, v.craft_length, v.craft_return);
  score(repair, v.repair_length, v.repair_return);
  return v;
}

// -- pipeline ---------------------------------------------------------------------

std::map<ConceptId, ClassifierPtr> learn_interface(const GridWorld& world, const std::vector<MapPtr>& maps,
                                                   const CausalModel& model, ConceptId known,
                                                   const ExperimentConfig& cfg, OracleBackend& oracle) {
  std::map<ConceptId, ClassifierPtr> out;
  if (known == kGoalConcept) return out;
  ChainOptions opt;
  opt.acquisition = cfg.acquisition;
  opt.training = cfg.training;
  const ChainPlan plan = make_chain_plan(model, known, {kGoalConcept}, cfg.acquisition);
  ChainResult r = learn_concept_chain(world, maps, model, plan, oracle, opt, derive_seed(cfg.master_seed, {kTagInterface}));
  for (const auto& clf : r.classifiers) out[clf->concept_id()] = clf;
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_artifacts(const ExperimentResult& r, const CausalModel& model) {
  const fs::path dir = r.config.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", config_to_text(r.config));
  std::vector<MapSpec> specs;
  for (const auto& m : r.maps) specs.push_back(*m);
  save_maps((dir / "maps.json").string(), specs);
  write_text(dir / "causal_model.txt", to_text(model));
  if (r.chain) {
    const auto& c = *r.chain;
    fs::create_directories(dir / "classifiers");
    fs::create_directories(dir / "audit");
    if (r.config.save_datasets) fs::create_directories(dir / "datasets");
    for (std::size_t k = 0; k < c.stages.size(); ++k) {
      const std::string stem = "stage" + std::to_string(k) + "_" + std::string(concept_name(c.stages[k].target));
      save_classifier((dir / "classifiers" / (stem + ".clf")).string(), *c.classifiers[k]);
      std::ofstream audit(dir / "audit" / (stem + ".jsonl"));
      write_audit(audit, c.ledgers[k]);
      if (r.config.save_datasets) {
        std::ofstream data(dir / "datasets" / (stem + ".txt"));
        write_dataset(data, c.stages[k].target, c.positives[k], c.negatives[k]);
      }
    }
  }
  std::ofstream curves(dir / "training_curves.csv");
  write_training_curves(curves, r.policy);
  if (r.config.save_policies) save_policy((dir / "policy.txt").string(), r.policy, r.maps);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  res.maps = share_maps(generate_maps(cfg.master_seed, cfg.map_count, cfg.generation));
  const GridWorld world(cfg.env);
  const CausalModel model = crafting_model();
  SimulatedOracle simulated;
  OracleBackend& oracle = hooks.oracle ? *hooks.oracle : simulated;
  for (const auto& m : res.maps) res.routes.push_back(route_values(world, m, cfg.q_learning.gamma));

  ClassifierPtr target;
  if (!cfg.baseline) {
    std::map<ConceptId, ClassifierPtr> learned;
    const std::map<ConceptId, ClassifierPtr>* interface = hooks.interface;
    if (!interface) {
      log_line(hooks, "learning symbolic interface for " + std::string(concept_name(cfg.known)));
      learned = learn_interface(world, res.maps, model, cfg.known, cfg, oracle);
      interface = &learned;
    }
    ChainOptions opt;
    opt.acquisition = cfg.acquisition;
    opt.training = cfg.training;
    opt.interface = *interface;
    opt.progress = hooks.progress;
    const ChainPlan plan = make_chain_plan(model, cfg.target, {cfg.known}, cfg.acquisition);
    log_line(hooks, "learning " + std::string(concept_name(cfg.target)) + " from " +
                        std::string(concept_name(cfg.known)) + " (chain length " +
                        std::to_string(plan.path.length()) + ")");
    res.chain = learn_concept_chain(world, res.maps, model, plan, oracle, opt, derive_seed(cfg.master_seed, {kTagChain}));
    target = res.chain->target_classifier();

    if (cfg.evaluation_states > 0) {
      auto rng = make_rng(cfg.master_seed, {kTagHeldOut});
      std::vector<std::pair<State, bool>> labeled;
      for (auto& s : sample_states(world, res.maps, cfg.evaluation_states, cfg.acquisition.episode_length, rng)) {
        const bool truth = ground_truth(cfg.target, s);
        labeled.emplace_back(std::move(s), truth);
      }
      res.target_accuracy = evaluate_accuracy(*target, labeled);
    }
  }

  const std::uint64_t policy_seed = derive_seed(cfg.master_seed, {kTagPolicy});
  if (cfg.baseline) {
    log_line(hooks, "training baseline policy");
    res.policy = train_flat_policy(world, res.maps, environment_reward(), cfg.q_learning, policy_seed, "baseline");
  } else if (cfg.preference.kind == PreferenceKind::avoid) {
    log_line(hooks, "training shaped policy");
    CachedPredictor predicted(target);
    res.policy = train_flat_policy(world, res.maps,
                                   shape_reward(environment_reward(), [predicted](const State& s) { return predicted(s); },
                                                cfg.preference.penalty),
                                   cfg.q_learning, policy_seed,
                                   "avoid:" + std::string(concept_name(cfg.preference.concept_id)));
  } else {
    // Subgoals are assumed serializable; only warn when the goal cannot follow the target.
    const ConceptId c = cfg.preference.concept_id;
    for (const auto& map : res.maps) {
      const State init = world.initial_state(map);
      const auto to_target = shortest_plan(world, init, [c](const State& s) { return ground_truth(c, s); }, no_spurious_drop);
      bool ok = to_target.has_value();
      if (ok) {
        State s = init;
        for (Action a : *to_target) s = world.step(s, a).next;
        ok = shortest_plan(world, s, is_goal, no_spurious_drop).has_value();
      }
      if (!ok)
        log_line(hooks, "warning: map " + std::to_string(map->id) + ": goal not reachable after " +
                            std::string(concept_name(c)));
    }
    log_line(hooks, "training options");
    res.policy = train_achieve_policy(world, res.maps, target, cfg.q_learning, policy_seed);
  }

  res.metrics = evaluate_policy(world, res.policy, res.maps, cfg.trials, cfg.preference,
                                derive_seed(cfg.master_seed, {kTagEvaluation}));

  ReportRow& row = res.row;
  row.chain_length = res.chain ? res.chain->plan.path.length() : 0;
  row.setting = cfg.baseline ? "baseline" : "chain-" + std::to_string(row.chain_length);
  row.goal_pct = round_to(res.metrics.goal_pct, 1);
  row.aligned_pct = round_to(res.metrics.aligned_pct, 1);
  row.aligned_pct_all = round_to(res.metrics.aligned_pct_all, 1);
  row.avg_steps = round_to(res.metrics.avg_steps, 2);
  row.avg_steps_all = round_to(res.metrics.avg_steps_all, 2);
  row.queries = res.chain ? res.chain->total_queries() : 0;
  row.converged = res.policy.converged();
  int succ = 0, aligned = 0;
  for (std::size_t i = 0; i < res.maps.size(); ++i) {
    if (!res.routes[i].repair_optimal()) continue;
    succ += res.metrics.per_map[i].successes;
    aligned += res.metrics.per_map[i].aligned;
  }
  row.aligned_pct_repair_optimal = succ ? round_to(100.0 * aligned / succ, 1) : 0.0;

  if (!cfg.output_dir.empty()) write_artifacts(res, model);
  return res;
}

std::vector<ReportRow> Table1::rows() const {
  std::vector<ReportRow> out;
  for (const auto& r : results) out.push_back(r.row);
  return out;
}

Table1 reproduce_table1(const ExperimentConfig& base, const RunHooks& hooks) {
  base.validate();
  Table1 table;
  const GridWorld world(base.env);
  const CausalModel model = crafting_model();
  SimulatedOracle simulated;
  OracleBackend& oracle = hooks.oracle ? *hooks.oracle : simulated;

  // One symbolic interface serves both the chain-1 and chain-2 settings.
  std::map<ConceptId, ClassifierPtr> interface;
  if (hooks.interface) {
    interface = *hooks.interface;
  } else {
    log_line(hooks, "learning symbolic interface (has_ladder, has_broken_ladder) from the goal");
    auto maps = share_maps(generate_maps(base.master_seed, base.map_count, base.generation));
    interface = learn_interface(world, maps, model, ConceptId::has_broken_ladder, base, oracle);
  }

  const std::pair<ConceptId, const char*> settings[] = {
      {ConceptId::has_broken_ladder, "chain-1"},
      {ConceptId::has_ladder, "chain-2"},
      {ConceptId::ladder_at_docker, "chain-3"},
  };
  for (const auto& [known, name] : settings) {
    ExperimentConfig cfg = base;
    cfg.known = known;
    cfg.baseline = false;
    if (!base.output_dir.empty()) cfg.output_dir = (fs::path(base.output_dir) / name).string();
    RunHooks h = hooks;
    h.interface = &interface;
    log_line(hooks, std::string("== ") + name);
    table.results.push_back(run_experiment(cfg, h));
  }
  ExperimentConfig cfg = base;
  cfg.baseline = true;
  if (!base.output_dir.empty()) cfg.output_dir = (fs::path(base.output_dir) / "baseline").string();
  log_line(hooks, "== baseline");
  table.results.push_back(run_experiment(cfg, hooks));
  if (!base.output_dir.empty()) write_report(base.output_dir, table.results);
  return table;
}

// -- reports ----------------------------------------------------------------------

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "setting,chain_length,goal_pct,aligned_pct,aligned_pct_all,avg_steps,avg_steps_all,queries,"
         "aligned_pct_repair_optimal,converged\n";
  for (const auto& r : rows) {
    out << r.setting << ',' << r.chain_length << ',' << fixed(r.goal_pct, 1) << ',' << fixed(r.aligned_pct, 1) << ','
        << fixed(r.aligned_pct_all, 1) << ',' << fixed(r.avg_steps, 2) << ',' << fixed(r.avg_steps_all, 2) << ','
        << r.queries << ',' << fixed(r.aligned_pct_repair_optimal, 1) << ',' << (r.converged ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string report_json(const std::vector<ExperimentResult>& results) {
  json rows = json::array();
  for (const auto& r : results) {
    const auto& row = r.row;
    json j = {{"setting", row.setting},
              {"chain_length", row.chain_length},
              {"known", r.config.baseline ? "" : std::string(concept_name(r.config.known))},
              {"target", concept_name(r.config.target)},
              {"preference",
               {{"kind", preference_kind_name(r.config.preference.kind)},
                {"concept", concept_name(r.config.preference.concept_id)},
                {"penalty", r.config.preference.penalty}}},
              {"goal_pct", row.goal_pct},
              {"aligned_pct", row.aligned_pct},
              {"aligned_pct_all", row.aligned_pct_all},
              {"avg_steps", row.avg_steps},
              {"avg_steps_all", row.avg_steps_all},
              {"queries", row.queries},
              {"aligned_pct_repair_optimal", row.aligned_pct_repair_optimal},
              {"episodes", r.metrics.episodes},
              {"successes", r.metrics.successes},
              {"zero_success", r.metrics.zero_success}};
    json per_map = json::array();
    for (std::size_t i = 0; i < r.metrics.per_map.size(); ++i) {
      const auto& pm = r.metrics.per_map[i];
      const auto& rv = r.routes[i];
      per_map.push_back({{"map_id", pm.map_id},
                         {"episodes", pm.episodes},
                         {"successes", pm.successes},
                         {"aligned", pm.aligned},
                         {"avg_steps", pm.successes ? round_to(pm.steps / pm.successes, 2) : 0.0},
                         {"repair_optimal", rv.repair_optimal()},
                         {"craft_plan_length", rv.craft_length},
                         {"repair_plan_length", rv.repair_length},
                         {"craft_return", round_to(rv.craft_return, 4)},
                         {"repair_return", round_to(rv.repair_return, 4)}});
    }
    j["maps"] = per_map;
    if (r.chain) {
      json stages = json::array();
      for (const auto& st : r.chain->stages) {
        stages.push_back({{"stage", st.index},
                          {"target", concept_name(st.target)},
                          {"known", concept_name(st.known)},
                          {"known_grounding", st.known_is_goal ? "goal" : "classifier"},
                          {"budget", budget_json(st.budget)},
                          {"spent_pos", st.spent_pos},
                          {"spent_neg", st.spent_neg},
                          {"cache_hits", st.cache_hits},
                          {"seeds", st.seeds},
                          {"seed_episodes", st.seed_stats.episodes},
                          {"seed_detections", st.seed_stats.detections},
                          {"seed_queries", st.seed_stats.queried},
                          {"seeds_inferred", st.seed_stats.inferred},
                          {"inference_branch", st.seed_stats.inference_branch},
                          {"positives", st.positive_examples},
                          {"negatives", st.negative_examples},
                          {"walk_stalled", st.expansion.stalled},
                          {"negative_pool", st.negatives.pool},
                          {"training_loss", round_to(st.training.final_loss, 6)},
                          {"loss_threshold", st.training.loss_threshold},
                          {"threshold_met", st.training.threshold_met},
                          {"reinits", st.training.reinits}});
      }
      j["stages"] = stages;
    }
    if (r.target_accuracy) {
      const auto& a = *r.target_accuracy;
      j["target_accuracy"] = {{"states", a.count},
                              {"accuracy", round_to(a.accuracy, 4)},
                              {"precision", round_to(a.precision, 4)},
                              {"recall", round_to(a.recall, 4)}};
    }
    json training = json::array();
    for (const auto& d : r.policy.diagnostics)
      training.push_back({{"map_id", d.map_id}, {"table", d.table}, {"steps", d.steps}, {"converged", d.converged}});
    j["policy"] = {{"label", r.policy.label}, {"converged", r.policy.converged()}, {"training", training}};
    rows.push_back(std::move(j));
  }
  json doc = {{"schema", "presca.report"},
              {"version", 1},
              {"master_seed", results.empty() ? 0 : results.front().config.master_seed},
              {"rows", rows}};
  return doc.dump(2) + "\n";
}

void write_report(const std::string& dir, const std::vector<ExperimentResult>& results) {
  fs::create_directories(dir);
  std::vector<ReportRow> rows;
  for (const auto& r : results) rows.push_back(r.row);
  write_text(fs::path(dir) / "report.csv", report_csv(rows));
  write_text(fs::path(dir) / "report.json", report_json(results));
}

}  // namespace presca
