#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "presca/classifier.hpp"
#include "presca/gridworld.hpp"

namespace presca {

enum class PreferenceKind { avoid, achieve };
std::string_view preference_kind_name(PreferenceKind k);

struct Preference {
  PreferenceKind kind = PreferenceKind::avoid;
  ConceptId concept_id = ConceptId::in_storage_area;
  double penalty = -2.0;  // r_T, avoid only
};

/// Classifier with a per-(map, configuration) prediction cache.
class CachedPredictor {
 public:
  explicit CachedPredictor(ClassifierPtr clf);
  bool operator()(const State& s) const;
  const ClassifierPtr& classifier() const { return clf_; }

 private:
  ClassifierPtr clf_;
  std::shared_ptr<std::unordered_map<std::uint64_t, bool>> memo_;
};

using RewardFn = std::function<double(const State& from, Action action, const StepResult& result)>;

/// The environment's own reward.
RewardFn environment_reward();
/// R'(s,a,s') = R(s,a,s') + r_T * [predicate(s')]. Requires r_T < 0.
RewardFn shape_reward(RewardFn base, std::function<bool(const State&)> predicate, double penalty);

using ActionValues = std::array<double, kNumActions>;

/// Action values keyed by config_key within a single map. Unseen states read as
/// the initial value.
class QTable {
 public:
  explicit QTable(double initial = 0.0) : initial_(initial) { fallback_.fill(initial); }

  double initial_value() const { return initial_; }
  const ActionValues& values(std::uint64_t key) const;
  ActionValues& mutable_values(std::uint64_t key) { return table_.try_emplace(key, fallback_).first->second; }
  std::size_t size() const { return table_.size(); }
  const std::unordered_map<std::uint64_t, ActionValues>& entries() const { return table_; }
  void reserve(std::size_t n) { table_.reserve(n); }

 private:
  double initial_;
  ActionValues fallback_;
  std::unordered_map<std::uint64_t, ActionValues> table_;
};

double max_value(const ActionValues& v);
/// Arg-max; ties broken uniformly when `rng` is given, else lowest index.
Action greedy_action(const ActionValues& v, std::mt19937_64* rng = nullptr);

struct QLearningConfig {
  double gamma = 0.95;
  double alpha = 0.1;
  /// Optimistic start values drive systematic exploration.
  double initial_value = 0.5;
  double epsilon_start = 0.1;
  double epsilon_end = 0.01;
  long epsilon_decay_steps = 1'000'000;
  long max_steps = 2'000'000;
  /// After each episode its transitions are replayed in reverse this many
  /// times with the same update; speeds up value propagation without extra
  /// environment steps.
  int replay_passes = 0;
  /// Dyna-style planning: every `check_interval` episodes, sweep the learned
  /// (deterministic) transition model with full backups until the largest
  /// change drops below `planning_tolerance` or `planning_sweeps` is reached.
  int planning_sweeps = 100;
  double planning_tolerance = 1e-9;
  int episode_cap = 100;
  /// Greedy rollouts are checked every `check_interval` episodes; training
  /// stops once the greedy rollout reaches termination with an unchanged action
  /// sequence for `stable_checks` checks in a row. 0 disables early stopping.
  int check_interval = 250;
  int stable_checks = 12;

  void validate() const;
  std::uint64_t hash() const;
};

struct CurvePoint {
  long steps = 0;
  int episodes = 0;
  double epsilon = 0.0;
  double mean_return = 0.0;    // training episodes since the previous point
  double greedy_return = 0.0;  // undiscounted, learning reward
  int greedy_length = 0;
  bool greedy_terminated = false;
};

struct QLearningResult {
  QTable q;
  long steps = 0;
  int episodes = 0;
  bool converged = false;
  std::vector<CurvePoint> curve;
  /// Terminal states met during training (deduplicated, bounded).
  std::vector<State> terminal_states;
};

struct LearningProblem {
  /// Episode start states; sampled uniformly unless `primary_start` is set,
  /// in which case it is used with probability 1/2.
  std::vector<State> starts;
  std::optional<State> primary_start;
  RewardFn reward;
  /// Episode ends (no bootstrap) when this holds on the successor.
  std::function<bool(const StepResult&)> terminal;
};

QLearningResult q_learning(const GridWorld& world, const LearningProblem& problem, const QLearningConfig& cfg,
                           std::mt19937_64& rng);

/// Greedy rollout until terminal or `cap` steps.
struct Rollout {
  std::vector<State> states;
  std::vector<Action> actions;
  std::vector<double> rewards;  // environment rewards
  bool goal = false;
};
Rollout greedy_rollout(const GridWorld& world, const QTable& q, const State& start, int cap,
                       const std::function<bool(const StepResult&)>& terminal, std::mt19937_64* tie_rng);

struct OptionSpec {
  std::function<bool(const State&)> initiation;
  std::function<bool(const State&)> termination;
  QTable policy;
};

struct MapTraining {
  int map_id = 0;
  std::string table;  // flat | option_target | option_goal
  long steps = 0;
  int episodes = 0;
  bool converged = false;
  std::vector<CurvePoint> curve;
};

/// Flat per-map policy, or two per-map options sequenced by a latching meta rule.
struct PolicyBundle {
  enum class Kind { flat, options };
  Kind kind = Kind::flat;
  std::string label;
  /// Digest of the training configuration.
  std::uint64_t config_hash = 0;
  std::map<int, QTable> flat;
  std::map<int, QTable> option_target;
  std::map<int, QTable> option_goal;
  /// Switch signal for the options case.
  ConceptId switch_concept{};
  ClassifierPtr switch_classifier;
  std::vector<MapTraining> diagnostics;
  /// Map id -> fingerprint, as recorded in a policy file.
  std::map<int, std::uint64_t> map_fingerprints;

  bool converged() const;
  long total_steps() const;
};

/// Per-map Q-learning on the (possibly shaped) environment reward.
PolicyBundle train_flat_policy(const GridWorld& world, const std::vector<MapPtr>& maps, const RewardFn& reward,
                               const QLearningConfig& cfg, std::uint64_t seed, std::string label = "flat");

/// Option reward: +1 on reaching termination, step cost and drop penalty otherwise.
RewardFn option_reward(const RewardConfig& rewards, std::function<bool(const State&)> termination);

/// Trains an option on one map from the given start states.
QLearningResult train_option(const GridWorld& world, const std::vector<State>& starts,
                             const std::function<bool(const State&)>& termination, const QLearningConfig& cfg,
                             std::mt19937_64& rng);

/// Achieve preference: O_T (reach the target concept) then O_G (reach the goal),
/// per map. O_T terminates on the target classifier, O_G on the goal.
PolicyBundle train_achieve_policy(const GridWorld& world, const std::vector<MapPtr>& maps, ClassifierPtr target,
                                  const QLearningConfig& cfg, std::uint64_t seed);

/// Chooses O_T until the switch classifier fires, then O_G for the rest of the episode.
class MetaController {
 public:
  explicit MetaController(const PolicyBundle& bundle);
  Action act(const State& s, std::mt19937_64& rng);
  bool switched() const { return switched_; }
  int switches() const { return switches_; }
  void reset();

 private:
  const PolicyBundle& bundle_;
  CachedPredictor predictor_;
  bool switched_ = false;
  int switches_ = 0;
};

/// Greedy action of a flat bundle (random tie-break).
Action flat_action(const PolicyBundle& bundle, const State& s, std::mt19937_64& rng);

// -- persistence ---------------------------------------------------------------

void write_policy(std::ostream& out, const PolicyBundle& bundle, const std::vector<MapPtr>& maps);
/// Classifiers referenced by option bundles must be supplied by the caller.
PolicyBundle read_policy(std::istream& in, ClassifierPtr switch_classifier = nullptr);
void save_policy(const std::string& path, const PolicyBundle& bundle, const std::vector<MapPtr>& maps);
PolicyBundle load_policy(const std::string& path, ClassifierPtr switch_classifier = nullptr);
void write_training_curves(std::ostream& out, const PolicyBundle& bundle);

}  // namespace presca
