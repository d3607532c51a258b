#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "presca/causal_model.hpp"
#include "presca/classifier.hpp"
#include "presca/error.hpp"
#include "presca/gridworld.hpp"
#include "presca/oracle.hpp"

namespace presca {

struct AcquisitionConfig {
  /// Length of the random episodes that build the negative pool.
  int episode_length = 100;
  /// Length of the random episodes searched for seed transitions.
  int seed_episode_length = 500;
  int random_walk_length = 5;
  int total_episodes = 200;
  Budget intermediate_budget{375, 1125, 40};
  Budget target_budget{500, 1500, 40};
  /// Seed search gives up after this many episodes without reaching U seeds.
  int max_seed_episodes = 50000;
  /// Positive expansion stops after this many consecutive walks that charge nothing.
  int max_idle_walks = 10000;

  void validate() const;
};

/// How the known concept of a stage is evaluated: the goal predicate (the only
/// ground truth the agent is given) or a learned classifier.
class KnownGrounding {
 public:
  static KnownGrounding goal() { return KnownGrounding(kGoalConcept, nullptr); }
  static KnownGrounding learned(ClassifierPtr clf);

  ConceptId concept_id() const { return concept_; }
  bool is_goal() const { return clf_ == nullptr; }
  const ClassifierPtr& classifier() const { return clf_; }
  /// Memoized per (map, configuration).
  bool operator()(const State& s) const;

 private:
  KnownGrounding(ConceptId c, ClassifierPtr clf) : concept_(c), clf_(std::move(clf)) {}
  ConceptId concept_;
  ClassifierPtr clf_;
  mutable std::unordered_map<std::uint64_t, bool> memo_;
};

/// Live counters for observers (the labeling service). Thread-safe.
class AcquisitionProgress {
 public:
  struct Snapshot {
    std::string stage;
    int stage_index = 0;
    int stage_count = 0;
    ConceptId target{};
    Budget budget;
    int spent_pos = 0;
    int spent_neg = 0;
    int seeds = 0;
    std::string phase;  // seeds | positives | negatives | training | done | failed
  };

  void update(const Snapshot& s);
  void update(const QueryLedger& ledger, int seeds, const std::string& phase);
  Snapshot snapshot() const;

 private:
  mutable std::mutex mu_;
  Snapshot snap_;
};

struct SeedSet {
  std::vector<State> states;
  std::map<std::string, std::size_t> index;  // canonical -> position

  bool insert(const State& s);
  std::size_t size() const { return states.size(); }
};

struct SeedStats {
  int episodes = 0;
  int detections = 0;
  int queried = 0;
  int inferred = 0;
  int rejected = 0;
  /// True when seeds were inferred without asking the user.
  bool inference_branch = false;
};

class SeedStarvation : public Error {
 public:
  SeedStarvation(const std::string& what, SeedSet partial, SeedStats stats)
      : Error(what), partial_(std::move(partial)), stats_(stats) {}
  const SeedSet& partial() const { return partial_; }
  const SeedStats& stats() const { return stats_; }

 private:
  SeedSet partial_;
  SeedStats stats_;
};

struct StageContext {
  const GridWorld& world;
  const std::vector<MapPtr>& maps;
  const AcquisitionConfig& config;
  QueryLedger& ledger;
  OracleBackend& oracle;
  AcquisitionProgress* progress = nullptr;
};

/// Algorithm 1, seed phase. Throws SeedStarvation.
SeedSet collect_seeds(const StageContext& ctx, const KnownGrounding& known, const CausalModel& model, ConceptId target,
                      std::mt19937_64& rng, SeedStats* stats = nullptr);

struct ExpansionStats {
  int walks = 0;
  int queried = 0;
  int positive = 0;
  bool stalled = false;
};

/// Algorithm 2. Returns the positive walk states (seeds not included).
std::vector<State> expand_positives(const StageContext& ctx, const SeedSet& seeds, ConceptId target,
                                    std::mt19937_64& rng, ExpansionStats* stats = nullptr);

/// Unique states of `total_episodes` random episodes.
std::vector<State> build_negative_pool(const GridWorld& world, const std::vector<MapPtr>& maps, int total_episodes,
                                       int episode_length, std::mt19937_64& rng);

struct NegativeStats {
  std::size_t pool = 0;
  int draws = 0;
  int queried = 0;
  int negative = 0;
  bool pool_exhausted = false;
};

/// Algorithm 3. Throws EmptyPoolError.
std::vector<State> collect_negatives(const StageContext& ctx, ConceptId target, std::mt19937_64& rng,
                                     NegativeStats* stats = nullptr);

struct StagePlan {
  ConceptId target{};
  ConceptId known{};
  Budget budget;
  bool is_target_stage = false;
};

struct ChainPlan {
  CausalPath path;
  std::vector<StagePlan> stages;  // deepest first
};

/// Stages C_In, ..., C_I1, C_T for the path from `target` to the nearest known concept.
ChainPlan make_chain_plan(const CausalModel& model, ConceptId target, const std::set<ConceptId>& known,
                          const AcquisitionConfig& config);

struct StageReport {
  int index = 0;
  ConceptId target{};
  ConceptId known{};
  bool known_is_goal = false;
  Budget budget;
  int spent_pos = 0;
  int spent_neg = 0;
  int cache_hits = 0;
  int seeds = 0;
  SeedStats seed_stats;
  ExpansionStats expansion;
  NegativeStats negatives;
  int positive_examples = 0;
  int negative_examples = 0;
  TrainingMetadata training;
};

struct ChainResult {
  ChainPlan plan;
  std::vector<StageReport> stages;
  std::vector<QueryLedger> ledgers;
  std::vector<ClassifierPtr> classifiers;  // one per stage
  std::vector<std::vector<State>> positives;
  std::vector<std::vector<State>> negatives;

  ClassifierPtr target_classifier() const { return classifiers.back(); }
  int total_queries() const { return total_spent(ledgers); }
};

struct ChainOptions {
  AcquisitionConfig acquisition;
  TrainConfig training;
  /// Classifiers for concepts already in the symbolic interface.
  std::map<ConceptId, ClassifierPtr> interface;
  AcquisitionProgress* progress = nullptr;
  /// Labels from earlier ledgers, keyed by stage index, to warm-start the cache.
  const std::vector<QueryLedger>* warm = nullptr;
};

/// Learns every stage of `plan` in order; each stage classifier grounds the next
/// stage's known concept. Seed starvation is rethrown naming the stage.
ChainResult learn_concept_chain(const GridWorld& world, const std::vector<MapPtr>& maps, const CausalModel& model,
                                const ChainPlan& plan, OracleBackend& oracle, const ChainOptions& options,
                                std::uint64_t seed);

/// States drawn uniformly from random episodes, for held-out evaluation.
std::vector<State> sample_states(const GridWorld& world, const std::vector<MapPtr>& maps, int count,
                                 int episode_length, std::mt19937_64& rng);

}  // namespace presca
