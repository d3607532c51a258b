// presca: command-line front end for concept acquisition, preference training
// and the Table-1 style evaluation.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "presca/acquisition.hpp"
#include "presca/error.hpp"
#include "presca/experiment.hpp"
#include "presca/rng.hpp"
#include "presca/service.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace presca;

namespace {

// Seed stream tags shared with run_experiment, so a subcommand pipeline and
// reproduce-table1 draw the same random numbers.
constexpr std::uint64_t kTagChain = 1, kTagPolicy = 3, kTagEvaluation = 4, kTagHeldOut = 5;

struct Common {
  std::string config;
  std::int64_t seed = -1;
  std::string out;
  bool quiet = false;

  ExperimentConfig load() const {
    ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_config(config);
    if (seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed);
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    return cfg;
  }
  std::function<void(const std::string&)> logger() const {
    if (quiet) return nullptr;
    return [](const std::string& msg) { std::cerr << "[presca] " << msg << std::endl; };
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the master seed");
  cmd->add_option("-o,--out", c.out, "Output directory");
  cmd->add_flag("-q,--quiet", c.quiet, "No progress messages on stderr");
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

std::vector<MapPtr> make_maps(const ExperimentConfig& cfg) {
  return share_maps(generate_maps(cfg.master_seed, cfg.map_count, cfg.generation));
}

ConceptId concept_arg(const std::string& name) {
  if (auto c = parse_concept(name)) return *c;
  throw Error("unknown concept '" + name + "'");
}

json stage_summary(const StageReport& st) {
  return {{"stage", st.index},
          {"target", concept_name(st.target)},
          {"known", concept_name(st.known)},
          {"spent_pos", st.spent_pos},
          {"spent_neg", st.spent_neg},
          {"seeds", st.seeds},
          {"positives", st.positive_examples},
          {"negatives", st.negative_examples},
          {"training_loss", st.training.final_loss},
          {"threshold_met", st.training.threshold_met}};
}

// -- gen-maps -------------------------------------------------------------------

int cmd_gen_maps(const Common& common, const std::string& file) {
  const ExperimentConfig cfg = common.load();
  const auto specs = generate_maps(cfg.master_seed, cfg.map_count, cfg.generation);
  const auto maps = share_maps(specs);
  const GridWorld world(cfg.env);
  fs::path path = file;
  if (path.empty()) path = fs::path(cfg.output_dir.empty() ? "." : cfg.output_dir) / "maps.json";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_maps(path.string(), specs);
  json rows = json::array();
  for (const auto& m : maps) {
    const RouteValues rv = route_values(world, m, cfg.q_learning.gamma);
    rows.push_back({{"id", m->id},
                    {"fingerprint", hex_hash(map_fingerprint(*m))},
                    {"craft_plan_length", rv.craft_length},
                    {"repair_plan_length", rv.repair_length},
                    {"repair_optimal", rv.repair_optimal()}});
  }
  emit({{"command", "gen-maps"}, {"master_seed", cfg.master_seed}, {"path", path.string()}, {"maps", rows}});
  return 0;
}

// -- learn-concept / serve --------------------------------------------------------

struct LearnArgs {
  // Empty: take the config's value.
  std::string known;
  std::string target;
  std::string oracle = "simulated";
  std::vector<std::string> interface_files;
  int port = 8765;
  std::string host = "127.0.0.1";
  std::string static_dir;
  int label_timeout_s = 3600;
  int linger_s = 0;
};

int cmd_learn(const Common& common, const LearnArgs& args, bool serve) {
  ExperimentConfig cfg = common.load();
  if (!args.known.empty()) cfg.known = concept_arg(args.known);
  if (!args.target.empty()) cfg.target = concept_arg(args.target);
  const auto maps = make_maps(cfg);
  const GridWorld world(cfg.env);
  const CausalModel model = crafting_model();
  const auto log = common.logger();

  std::map<ConceptId, ClassifierPtr> interface;
  for (const auto& f : args.interface_files) {
    auto clf = std::make_shared<const ConceptClassifier>(load_classifier(f));
    interface[clf->concept_id()] = clf;
  }
  const ChainPlan plan = make_chain_plan(model, cfg.target, {cfg.known}, cfg.acquisition);
  if (cfg.known != kGoalConcept && !interface.count(cfg.known)) {
    if (log) log("learning the grounding of " + std::string(concept_name(cfg.known)) + " from the goal (simulated)");
    SimulatedOracle prior;
    interface = learn_interface(world, maps, model, cfg.known, cfg, prior);
  }

  ChainOptions opt;
  opt.acquisition = cfg.acquisition;
  opt.training = cfg.training;
  opt.interface = interface;
  AcquisitionProgress progress;
  opt.progress = &progress;

  const bool remote = serve || args.oracle == "remote";
  if (!remote && args.oracle != "simulated") throw Error("--oracle must be simulated or remote");
  LabelExchange exchange;
  SimulatedOracle simulated;
  RemoteOracle human(exchange, std::chrono::seconds(args.label_timeout_s));
  std::unique_ptr<LabelService> service;
  if (remote) {
    ServiceOptions so;
    so.host = args.host;
    so.port = args.port;
    so.static_dir = args.static_dir;
    service = std::make_unique<LabelService>(exchange, progress, so);
    const int port = service->start();
    std::cerr << "[presca] labeling service on http://" << args.host << ':' << port << std::endl;
  }
  OracleBackend& oracle = remote ? static_cast<OracleBackend&>(human) : simulated;

  if (log) log("learning " + std::string(concept_name(cfg.target)) + " (chain length " +
               std::to_string(plan.path.length()) + ")");
  ChainResult result;
  try {
    result = learn_concept_chain(world, maps, model, plan, oracle, opt, derive_seed(cfg.master_seed, {kTagChain}));
  } catch (...) {
    exchange.close();
    throw;
  }
  exchange.close();

  const fs::path dir = cfg.output_dir.empty() ? fs::path("presca-concept") : fs::path(cfg.output_dir);
  fs::create_directories(dir);
  json stages = json::array();
  json files = json::array();
  for (std::size_t k = 0; k < result.stages.size(); ++k) {
    const auto& st = result.stages[k];
    const std::string stem = "stage" + std::to_string(k) + "_" + std::string(concept_name(st.target));
    save_classifier((dir / (stem + ".clf")).string(), *result.classifiers[k]);
    std::ofstream audit(dir / (stem + ".audit.jsonl"));
    write_audit(audit, result.ledgers[k]);
    std::ofstream data(dir / (stem + ".dataset.txt"));
    write_dataset(data, st.target, result.positives[k], result.negatives[k]);
    stages.push_back(stage_summary(st));
    files.push_back((dir / (stem + ".clf")).string());
  }
  for (const auto& [c, clf] : interface) {
    const std::string name = "interface_" + std::string(concept_name(c)) + ".clf";
    save_classifier((dir / name).string(), *clf);
  }

  auto rng = make_rng(cfg.master_seed, {kTagHeldOut});
  std::vector<std::pair<State, bool>> labeled;
  for (auto& s : sample_states(world, maps, cfg.evaluation_states, cfg.acquisition.episode_length, rng)) {
    const bool truth = ground_truth(cfg.target, s);
    labeled.emplace_back(std::move(s), truth);
  }
  const AccuracyReport acc = evaluate_accuracy(*result.target_classifier(), labeled);

  if (service && args.linger_s > 0) std::this_thread::sleep_for(std::chrono::seconds(args.linger_s));
  emit({{"command", serve ? "serve" : "learn-concept"},
        {"known", concept_name(cfg.known)},
        {"target", concept_name(cfg.target)},
        {"oracle", remote ? "remote" : "simulated"},
        {"chain_length", plan.path.length()},
        {"queries", result.total_queries()},
        {"stages", stages},
        {"classifiers", files},
        {"target_accuracy", {{"states", acc.count}, {"accuracy", acc.accuracy}, {"precision", acc.precision}, {"recall", acc.recall}}}});
  return 0;
}

// -- train-agent ------------------------------------------------------------------

struct TrainArgs {
  std::string classifier;
  std::string preference;
  std::string concept_name;
  bool baseline = false;
};

int cmd_train(const Common& common, const TrainArgs& args) {
  ExperimentConfig cfg = common.load();
  if (args.preference == "avoid") cfg.preference.kind = PreferenceKind::avoid;
  else if (args.preference == "achieve") cfg.preference.kind = PreferenceKind::achieve;
  else if (!args.preference.empty()) throw Error("--preference must be avoid or achieve");
  if (!args.concept_name.empty()) cfg.preference.concept_id = concept_arg(args.concept_name);
  cfg.baseline = cfg.baseline || args.baseline;

  const auto maps = make_maps(cfg);
  const GridWorld world(cfg.env);
  const std::uint64_t seed = derive_seed(cfg.master_seed, {kTagPolicy});
  PolicyBundle policy;
  if (cfg.baseline) {
    policy = train_flat_policy(world, maps, environment_reward(), cfg.q_learning, seed, "baseline");
  } else {
    if (args.classifier.empty()) throw Error("--classifier is required unless --baseline is given");
    auto clf = std::make_shared<const ConceptClassifier>(load_classifier(args.classifier));
    if (clf->concept_id() != cfg.preference.concept_id) {
      throw Error("classifier grounds " + std::string(concept_name(clf->concept_id())) + " but the preference is over " +
                  std::string(concept_name(cfg.preference.concept_id)));
    }
    if (cfg.preference.kind == PreferenceKind::avoid) {
      CachedPredictor predicted(clf);
      policy = train_flat_policy(world, maps,
                                 shape_reward(environment_reward(), [predicted](const State& s) { return predicted(s); },
                                              cfg.preference.penalty),
                                 cfg.q_learning, seed, "avoid:" + std::string(concept_name(clf->concept_id())));
    } else {
      policy = train_achieve_policy(world, maps, clf, cfg.q_learning, seed);
    }
  }
  const fs::path dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  fs::create_directories(dir);
  const fs::path path = dir / "policy.txt";
  save_policy(path.string(), policy, maps);
  std::ofstream curves(dir / "training_curves.csv");
  write_training_curves(curves, policy);
  emit({{"command", "train-agent"},
        {"policy", path.string()},
        {"label", policy.label},
        {"kind", policy.kind == PolicyBundle::Kind::flat ? "flat" : "options"},
        {"steps", policy.total_steps()},
        {"converged", policy.converged()}});
  return 0;
}

// -- evaluate -----------------------------------------------------------------------

int cmd_evaluate(const Common& common, const std::string& policy_path, const std::string& classifier, int trials,
                 const std::string& preference, const std::string& concept_name_arg) {
  ExperimentConfig cfg = common.load();
  if (preference == "avoid") cfg.preference.kind = PreferenceKind::avoid;
  else if (preference == "achieve") cfg.preference.kind = PreferenceKind::achieve;
  else if (!preference.empty()) throw Error("--preference must be avoid or achieve");
  if (!concept_name_arg.empty()) cfg.preference.concept_id = concept_arg(concept_name_arg);
  if (trials > 0) cfg.trials = trials;
  if (!fs::exists(policy_path)) throw Error("policy not found: " + policy_path);
  ClassifierPtr clf;
  if (!classifier.empty()) clf = std::make_shared<const ConceptClassifier>(load_classifier(classifier));
  const PolicyBundle policy = load_policy(policy_path, clf);
  const auto maps = make_maps(cfg);
  for (const auto& m : maps) {
    auto it = policy.map_fingerprints.find(m->id);
    if (it == policy.map_fingerprints.end() || it->second != map_fingerprint(*m)) {
      throw Error("policy was trained on different maps (map " + std::to_string(m->id) + ")");
    }
  }
  const GridWorld world(cfg.env);
  const EvalMetrics m = evaluate_policy(world, policy, maps, cfg.trials, cfg.preference,
                                        derive_seed(cfg.master_seed, {kTagEvaluation}));
  emit({{"command", "evaluate"},
        {"policy", policy_path},
        {"episodes", m.episodes},
        {"goal_pct", m.goal_pct},
        {"aligned_pct", m.aligned_pct},
        {"aligned_pct_all", m.aligned_pct_all},
        {"avg_steps", m.avg_steps},
        {"avg_steps_all", m.avg_steps_all},
        {"zero_success", m.zero_success}});
  return 0;
}

// -- reproduce-table1 ------------------------------------------------------------------

int cmd_table1(const Common& common, bool csv) {
  ExperimentConfig cfg = common.load();
  if (cfg.output_dir.empty()) cfg.output_dir = "presca-table1";
  RunHooks hooks;
  hooks.log = common.logger();
  const Table1 t = reproduce_table1(cfg, hooks);
  if (csv) {
    std::cout << report_csv(t.rows());
    return 0;
  }
  json rows = json::array();
  for (const auto& r : t.rows()) {
    rows.push_back({{"setting", r.setting},
                    {"chain_length", r.chain_length},
                    {"goal_pct", r.goal_pct},
                    {"aligned_pct", r.aligned_pct},
                    {"avg_steps", r.avg_steps},
                    {"queries", r.queries},
                    {"aligned_pct_repair_optimal", r.aligned_pct_repair_optimal}});
  }
  emit({{"command", "reproduce-table1"},
        {"master_seed", cfg.master_seed},
        {"report", (fs::path(cfg.output_dir) / "report.json").string()},
        {"rows", rows}});
  return 0;
}

// -- audit ----------------------------------------------------------------------------

int cmd_audit(const Common& common, const std::vector<std::string>& files, bool verify) {
  std::vector<AuditFile> all;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw Error("audit log not found: " + f);
    try {
      for (auto& a : read_audit(in)) all.push_back(std::move(a));
    } catch (const ParseError& e) {
      throw Error(f + ": " + e.what());
    }
  }
  std::vector<MapPtr> maps;
  if (verify) maps = make_maps(common.load());
  const AuditCheck c = replay_audit(all, maps);
  emit({{"command", "audit"},
        {"files", files.size()},
        {"rows", c.rows},
        {"charged_pos", c.charged_pos},
        {"charged_neg", c.charged_neg},
        {"conflicts", c.conflicts},
        {"budget_overruns", c.budget_overruns},
        {"truth_mismatches", c.truth_mismatches},
        {"verified_against_ground_truth", verify},
        {"ok", c.ok()}});
  return c.ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept acquisition through causal links, and preference-aligned agents"};
  app.require_subcommand(1);

  Common gen_c, learn_c, serve_c, train_c, eval_c, table_c, audit_c;

  auto* gen = app.add_subcommand("gen-maps", "Generate the map set and report route feasibility");
  add_common(gen, gen_c);
  std::string maps_file;
  gen->add_option("--file", maps_file, "Where to write maps.json (default <out>/maps.json)");

  LearnArgs learn_a, serve_a;
  auto add_learn = [](CLI::App* cmd, LearnArgs& a) {
    cmd->add_option("--known", a.known, "Concept with an existing grounding (default: config, has_broken_ladder)");
    cmd->add_option("--target", a.target, "Concept to learn (default: config, in_storage_area)");
    cmd->add_option("--interface", a.interface_files, "Pre-existing classifier files for known concepts");
    cmd->add_option("--port", a.port, "Labeling service port (0 = any)")->capture_default_str();
    cmd->add_option("--host", a.host, "Labeling service address")->capture_default_str();
    cmd->add_option("--static", a.static_dir, "Serve the labeling UI bundle from this directory");
    cmd->add_option("--label-timeout", a.label_timeout_s, "Seconds to wait for each human label")->capture_default_str();
  };
  auto* learn = app.add_subcommand("learn-concept", "Learn a target concept down its causal chain");
  add_common(learn, learn_c);
  add_learn(learn, learn_a);
  learn->add_option("--oracle", learn_a.oracle, "simulated | remote")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run acquisition with a human labeler through the UI bridge");
  add_common(serve, serve_c);
  add_learn(serve, serve_a);
  serve->add_option("--linger", serve_a.linger_s, "Keep serving this many seconds after acquisition ends");

  TrainArgs train_a;
  auto* train = app.add_subcommand("train-agent", "Train a preference-shaped (or baseline) policy");
  add_common(train, train_c);
  train->add_option("--classifier", train_a.classifier, "Classifier grounding the preference concept");
  train->add_option("--preference", train_a.preference, "avoid | achieve");
  train->add_option("--concept", train_a.concept_name, "Preference concept");
  train->add_flag("--baseline", train_a.baseline, "Unshaped environment reward");

  std::string policy_path, eval_classifier, eval_pref, eval_concept;
  int eval_trials = 0;
  auto* eval = app.add_subcommand("evaluate", "Evaluate a saved policy");
  add_common(eval, eval_c);
  eval->add_option("--policy", policy_path, "Policy file")->required();
  eval->add_option("--classifier", eval_classifier, "Switch classifier for option policies");
  eval->add_option("--trials", eval_trials, "Trials per map");
  eval->add_option("--preference", eval_pref, "avoid | achieve");
  eval->add_option("--concept", eval_concept, "Preference concept");

  bool csv = false;
  auto* table = app.add_subcommand("reproduce-table1", "Run the three chain settings and the baseline");
  add_common(table, table_c);
  table->add_flag("--csv", csv, "Print the CSV table instead of a JSON summary");

  std::vector<std::string> audit_files;
  bool verify = false;
  auto* audit = app.add_subcommand("audit", "Replay query audit logs");
  add_common(audit, audit_c);
  audit->add_option("files", audit_files, "Audit logs (JSON lines)")->required();
  audit->add_flag("--verify", verify, "Re-check simulated labels against ground truth on the config's maps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen_maps(gen_c, maps_file);
    if (*learn) return cmd_learn(learn_c, learn_a, false);
    if (*serve) return cmd_learn(serve_c, serve_a, true);
    if (*train) return cmd_train(train_c, train_a);
    if (*eval) return cmd_evaluate(eval_c, policy_path, eval_classifier, eval_trials, eval_pref, eval_concept);
    if (*table) return cmd_table1(table_c, csv);
    if (*audit) return cmd_audit(audit_c, audit_files, verify);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
