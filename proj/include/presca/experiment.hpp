#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "presca/acquisition.hpp"
#include "presca/causal_model.hpp"
#include "presca/classifier.hpp"
#include "presca/gridworld.hpp"
#include "presca/oracle.hpp"
#include "presca/preference.hpp"

namespace presca {

struct ExperimentConfig {
  static constexpr int kVersion = 1;

  std::uint64_t master_seed = 7;
  int map_count = 10;
  GenerationOptions generation;
  EnvConfig env;
  /// Concept the agent already has a grounding for; ladder_at_docker is the goal.
  ConceptId known = ConceptId::has_broken_ladder;
  ConceptId target = ConceptId::in_storage_area;
  Preference preference;
  /// Train on the unshaped reward and skip concept acquisition.
  bool baseline = false;
  AcquisitionConfig acquisition;
  TrainConfig training;
  QLearningConfig q_learning;
  int trials = 10;
  /// Held-out states for classifier accuracy.
  int evaluation_states = 2000;
  std::string output_dir;
  /// Tabular dumps are large; written only on request.
  bool save_policies = false;
  bool save_datasets = true;

  void validate() const;
};

std::string config_to_text(const ExperimentConfig& cfg);
ExperimentConfig config_from_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct MapEval {
  int map_id = 0;
  int episodes = 0;
  int successes = 0;
  int aligned = 0;      // successful and aligned
  int aligned_any = 0;  // aligned regardless of success
  double steps = 0.0;   // summed over successful episodes
};

struct EvalMetrics {
  int episodes = 0;
  int successes = 0;
  int aligned = 0;
  int aligned_any = 0;
  double goal_pct = 0.0;
  /// Over successful episodes.
  double aligned_pct = 0.0;
  /// Over all episodes.
  double aligned_pct_all = 0.0;
  /// Over successful episodes.
  double avg_steps = 0.0;
  /// Over all episodes (failures count the cap).
  double avg_steps_all = 0.0;
  bool zero_success = false;
  std::vector<MapEval> per_map;
};

/// Whether a trajectory satisfies the preference, judged by ground truth only.
bool episode_aligned(const std::vector<State>& states, const Preference& preference);

/// Greedy (random tie-break) episodes to goal or the environment cap.
EvalMetrics evaluate_policy(const GridWorld& world, const PolicyBundle& bundle, const std::vector<MapPtr>& maps,
                            int trials, const Preference& preference, std::uint64_t seed);

/// Discounted return of the shortest plan along each route.
struct RouteValues {
  int map_id = 0;
  int craft_length = -1;
  int repair_length = -1;
  double craft_return = 0.0;
  double repair_return = 0.0;
  bool repair_optimal() const { return repair_length >= 0 && (craft_length < 0 || repair_return > craft_return); }
};
RouteValues route_values(const GridWorld& world, const MapPtr& map, double gamma);

struct ReportRow {
  std::string setting;
  int chain_length = 0;  // 0 for the baseline
  double goal_pct = 0.0;
  double aligned_pct = 0.0;
  double aligned_pct_all = 0.0;
  double avg_steps = 0.0;
  double avg_steps_all = 0.0;
  int queries = 0;
  /// Alignment restricted to maps whose repair route is reward-optimal.
  double aligned_pct_repair_optimal = 0.0;
  bool converged = true;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<MapPtr> maps;
  std::optional<ChainResult> chain;
  PolicyBundle policy;
  EvalMetrics metrics;
  std::vector<RouteValues> routes;
  std::optional<AccuracyReport> target_accuracy;
  ReportRow row;
};

/// Classifiers for the concepts on the path from `known` to the goal, learned
/// from the goal in earlier interactions. Their queries are not part of the
/// experiment's count.
std::map<ConceptId, ClassifierPtr> learn_interface(const GridWorld& world, const std::vector<MapPtr>& maps,
                                                   const CausalModel& model, ConceptId known,
                                                   const ExperimentConfig& cfg, OracleBackend& oracle);

struct RunHooks {
  /// Defaults to a simulated user.
  OracleBackend* oracle = nullptr;
  AcquisitionProgress* progress = nullptr;
  /// Pre-existing symbolic interface; learned on demand when absent.
  const std::map<ConceptId, ClassifierPtr>* interface = nullptr;
  std::function<void(const std::string&)> log;
};

/// find_path -> concept chain -> preference training -> evaluation. Writes
/// artifacts to cfg.output_dir when set.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {});

struct Table1 {
  std::vector<ExperimentResult> results;  // chain 1, 2, 3, baseline
  std::vector<ReportRow> rows() const;
};

/// The three chain settings plus the unshaped baseline on one map set.
Table1 reproduce_table1(const ExperimentConfig& base, const RunHooks& hooks = {});

std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_json(const std::vector<ExperimentResult>& results);
void write_report(const std::string& dir, const std::vector<ExperimentResult>& results);

}  // namespace presca
