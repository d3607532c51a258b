#include "presca/acquisition.hpp"

#include <algorithm>
#include <set>

#include "presca/rng.hpp"

namespace presca {

namespace {

std::uint64_t memo_key(const State& s) {
  return config_key(s) | (static_cast<std::uint64_t>(s.map->id) << 40);
}

const MapPtr& sample_map(const std::vector<MapPtr>& maps, std::mt19937_64& rng) {
  return maps[uniform_index(rng, maps.size())];
}

void report(const StageContext& ctx, int seeds, const char* phase) {
  if (ctx.progress) ctx.progress->update(ctx.ledger, seeds, phase);
}

}  // namespace

void AcquisitionConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw Error(std::string("acquisition config: ") + name + " must be >= 1");
  };
  positive(episode_length, "episode_length");
  positive(seed_episode_length, "seed_episode_length");
  positive(random_walk_length, "random_walk_length");
  positive(total_episodes, "total_episodes");
  positive(max_seed_episodes, "max_seed_episodes");
  positive(max_idle_walks, "max_idle_walks");
  for (const Budget* b : {&intermediate_budget, &target_budget}) {
    positive(b->n_pos, "n_pos");
    positive(b->n_neg, "n_neg");
    positive(b->min_seed, "min_seed");
  }
  if (target_budget.n_pos < intermediate_budget.n_pos || target_budget.n_neg < intermediate_budget.n_neg)
    throw Error("acquisition config: target budget below intermediate budget");
}

KnownGrounding KnownGrounding::learned(ClassifierPtr clf) {
  if (!clf) throw Error("known grounding needs a classifier");
  const ConceptId c = clf->concept_id();
  return KnownGrounding(c, std::move(clf));
}

bool KnownGrounding::operator()(const State& s) const {
  if (!clf_) return presca::is_goal(s);
  const auto key = memo_key(s);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  const bool v = clf_->predict(s);
  memo_.emplace(key, v);
  return v;
}

void AcquisitionProgress::update(const Snapshot& s) {
  std::lock_guard lock(mu_);
  snap_ = s;
}

void AcquisitionProgress::update(const QueryLedger& ledger, int seeds, const std::string& phase) {
  std::lock_guard lock(mu_);
  snap_.budget = ledger.budget();
  snap_.spent_pos = ledger.spent_pos();
  snap_.spent_neg = ledger.spent_neg();
  snap_.seeds = seeds;
  snap_.phase = phase;
}

AcquisitionProgress::Snapshot AcquisitionProgress::snapshot() const {
  std::lock_guard lock(mu_);
  return snap_;
}

bool SeedSet::insert(const State& s) {
  auto [it, inserted] = index.emplace(canonical_string(s), states.size());
  if (inserted) states.push_back(s);
  return inserted;
}

SeedSet collect_seeds(const StageContext& ctx, const KnownGrounding& known, const CausalModel& model, ConceptId target,
                      std::mt19937_64& rng, SeedStats* stats_out) {
  const ConceptId ck = known.concept_id();
  if (!model.has_edge(target, ck)) throw Error("no edge " + std::string(concept_name(target)) + " -> " +
                                               std::string(concept_name(ck)) + " in causal model");
  if (!model.equation(ck)) throw MissingEquationError("no equation for " + std::string(concept_name(ck)));

  const bool infer = known.is_goal() && is_necessary_cause(model, target, ck);
  const int needed = ctx.ledger.budget().min_seed;
  SeedSet seeds;
  SeedStats stats;
  stats.inference_branch = infer;

  auto fail = [&](const std::string& why) {
    if (stats_out) *stats_out = stats;
    throw SeedStarvation(why + " (" + std::to_string(seeds.size()) + "/" + std::to_string(needed) + " seeds)",
                         seeds, stats);
  };

  report(ctx, 0, "seeds");
  while (static_cast<int>(seeds.size()) < needed) {
    if (stats.episodes >= ctx.config.max_seed_episodes)
      fail("no " + std::string(concept_name(ck)) + " transition found within " +
           std::to_string(ctx.config.max_seed_episodes) + " episodes");
    ++stats.episodes;
    State s = ctx.world.initial_state(sample_map(ctx.maps, rng));
    bool before = known(s);
    for (int t = 0; t < ctx.config.seed_episode_length; ++t) {
      StepResult r = ctx.world.step(s, uniform_action(rng));
      const bool after = known(r.next);
      if (!before && after) {
        ++stats.detections;
        if (infer) {
          ++stats.inferred;
          seeds.insert(s);
        } else {
          if (remaining(ctx.ledger).first <= 0) fail("positive budget exhausted during seed collection");
          const int spent = ctx.ledger.spent_pos();
          const bool label = query(ctx.ledger, ctx.oracle, s, target, Charge::positive);
          if (ctx.ledger.spent_pos() != spent) ++stats.queried;
          if (label)
            seeds.insert(s);
          else
            ++stats.rejected;
          report(ctx, static_cast<int>(seeds.size()), "seeds");
        }
        break;  // restart after every detection
      }
      if (r.done && r.goal) break;
      before = after;
      s = std::move(r.next);
    }
  }
  if (stats_out) *stats_out = stats;
  return seeds;
}

std::vector<State> expand_positives(const StageContext& ctx, const SeedSet& seeds, ConceptId target,
                                    std::mt19937_64& rng, ExpansionStats* stats_out) {
  if (seeds.states.empty()) throw Error("expand_positives needs at least one seed");
  ExpansionStats stats;
  std::vector<State> positives;
  std::set<std::string> kept;
  int idle = 0;
  report(ctx, static_cast<int>(seeds.size()), "positives");
  while (remaining(ctx.ledger).first > 0) {
    if (idle >= ctx.config.max_idle_walks) {
      stats.stalled = true;
      break;
    }
    ++stats.walks;
    State s = seeds.states[uniform_index(rng, seeds.states.size())];
    s.step_count = 0;
    const int spent_before = ctx.ledger.spent_pos();
    for (int t = 0; t < ctx.config.random_walk_length && remaining(ctx.ledger).first > 0; ++t) {
      s = ctx.world.step(s, uniform_action(rng)).next;
      const int spent = ctx.ledger.spent_pos();
      const bool label = query(ctx.ledger, ctx.oracle, s, target, Charge::positive);
      if (ctx.ledger.spent_pos() != spent) ++stats.queried;
      if (label && kept.insert(canonical_string(s)).second) {
        ++stats.positive;
        positives.push_back(s);
      }
    }
    idle = ctx.ledger.spent_pos() == spent_before ? idle + 1 : 0;
    report(ctx, static_cast<int>(seeds.size()), "positives");
  }
  if (stats_out) *stats_out = stats;
  return positives;
}

std::vector<State> build_negative_pool(const GridWorld& world, const std::vector<MapPtr>& maps, int total_episodes,
                                       int episode_length, std::mt19937_64& rng) {
  std::vector<State> pool;
  std::set<std::string> seen;
  for (int e = 0; e < total_episodes; ++e) {
    for (State& s : run_random_episode(world, sample_map(maps, rng), episode_length, rng)) {
      s.step_count = 0;
      if (seen.insert(canonical_string(s)).second) pool.push_back(std::move(s));
    }
  }
  return pool;
}

std::vector<State> collect_negatives(const StageContext& ctx, ConceptId target, std::mt19937_64& rng,
                                     NegativeStats* stats_out) {
  if (ctx.config.total_episodes <= 0) throw EmptyPoolError("negative pool needs total_episodes >= 1");
  std::vector<State> pool =
      build_negative_pool(ctx.world, ctx.maps, ctx.config.total_episodes, ctx.config.episode_length, rng);
  if (pool.empty()) throw EmptyPoolError("negative pool is empty");

  NegativeStats stats;
  stats.pool = pool.size();
  std::vector<char> drawn(pool.size(), 0);
  std::size_t distinct = 0;
  std::vector<State> negatives;
  report(ctx, 0, "negatives");
  while (remaining(ctx.ledger).second > 0) {
    if (distinct == pool.size()) {
      stats.pool_exhausted = true;
      break;
    }
    const std::size_t i = uniform_index(rng, pool.size());
    ++stats.draws;
    if (drawn[i]) continue;  // already labeled; the cache would answer for free
    drawn[i] = 1;
    ++distinct;
    const int spent = ctx.ledger.spent_neg();
    const bool label = query(ctx.ledger, ctx.oracle, pool[i], target, Charge::negative);
    if (ctx.ledger.spent_neg() != spent) ++stats.queried;
    if (!label) {
      ++stats.negative;
      negatives.push_back(pool[i]);
    }
    if ((stats.draws & 63) == 0) report(ctx, 0, "negatives");
  }
  report(ctx, 0, "negatives");
  if (stats_out) *stats_out = stats;
  return negatives;
}

ChainPlan make_chain_plan(const CausalModel& model, ConceptId target, const std::set<ConceptId>& known,
                          const AcquisitionConfig& config) {
  ChainPlan plan;
  plan.path = find_path(model, target, known);
  const auto& c = plan.path.concepts;
  // Path runs target -> ... -> known; stages run from the concept next to known back to target.
  for (int i = static_cast<int>(c.size()) - 2; i >= 0; --i) {
    StagePlan st;
    st.target = c[i];
    st.known = c[i + 1];
    st.is_target_stage = i == 0;
    st.budget = st.is_target_stage ? config.target_budget : config.intermediate_budget;
    plan.stages.push_back(st);
  }
  return plan;
}

ChainResult learn_concept_chain(const GridWorld& world, const std::vector<MapPtr>& maps, const CausalModel& model,
                                const ChainPlan& plan, OracleBackend& oracle, const ChainOptions& options,
                                std::uint64_t seed) {
  options.acquisition.validate();
  if (maps.empty()) throw Error("learn_concept_chain needs at least one map");
  ChainResult result;
  result.plan = plan;
  result.ledgers.reserve(plan.stages.size());

  ClassifierPtr previous;
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const StagePlan& st = plan.stages[k];
    const std::string stage_name = std::string(concept_name(st.target)) + "<-" + std::string(concept_name(st.known));

    KnownGrounding known = KnownGrounding::goal();
    if (previous && previous->concept_id() == st.known) {
      known = KnownGrounding::learned(previous);
    } else if (auto it = options.interface.find(st.known); it != options.interface.end()) {
      known = KnownGrounding::learned(it->second);
    } else if (st.known != kGoalConcept) {
      throw Error("stage " + stage_name + ": no grounding available for known concept");
    }

    result.ledgers.emplace_back(st.budget, stage_name);
    QueryLedger& ledger = result.ledgers.back();
    if (options.warm && k < options.warm->size()) ledger.warm_cache_from((*options.warm)[k]);
    if (options.progress) {
      AcquisitionProgress::Snapshot snap;
      snap.stage = stage_name;
      snap.stage_index = static_cast<int>(k);
      snap.stage_count = static_cast<int>(plan.stages.size());
      snap.target = st.target;
      snap.budget = st.budget;
      snap.phase = "seeds";
      options.progress->update(snap);
    }
    StageContext ctx{world, maps, options.acquisition, ledger, oracle, options.progress};

    StageReport rep;
    rep.index = static_cast<int>(k);
    rep.target = st.target;
    rep.known = st.known;
    rep.known_is_goal = known.is_goal();
    rep.budget = st.budget;

    auto seed_rng = make_rng(seed, {k, 1});
    SeedSet seeds;
    try {
      seeds = collect_seeds(ctx, known, model, st.target, seed_rng, &rep.seed_stats);
    } catch (const SeedStarvation& e) {
      if (options.progress) options.progress->update(ledger, static_cast<int>(e.partial().size()), "failed");
      throw SeedStarvation("stage " + stage_name + ": " + e.what(), e.partial(), e.stats());
    }
    rep.seeds = static_cast<int>(seeds.size());

    auto walk_rng = make_rng(seed, {k, 2});
    std::vector<State> walk = expand_positives(ctx, seeds, st.target, walk_rng, &rep.expansion);
    std::vector<State> positives = seeds.states;
    std::set<std::string> pos_keys;
    for (const auto& [key, _] : seeds.index) pos_keys.insert(key);
    for (auto& s : walk)
      if (pos_keys.insert(canonical_string(s)).second) positives.push_back(std::move(s));

    auto neg_rng = make_rng(seed, {k, 3});
    std::vector<State> negatives = collect_negatives(ctx, st.target, neg_rng, &rep.negatives);

    if (options.progress) options.progress->update(ledger, rep.seeds, "training");
    auto train_rng = make_rng(seed, {k, 4});
    auto clf = std::make_shared<const ConceptClassifier>(
        train_classifier(st.target, positives, negatives, options.training, train_rng));

    rep.spent_pos = ledger.spent_pos();
    rep.spent_neg = ledger.spent_neg();
    rep.cache_hits = ledger.cache_hits();
    rep.positive_examples = static_cast<int>(positives.size());
    rep.negative_examples = static_cast<int>(negatives.size());
    rep.training = clf->metadata();
    result.stages.push_back(rep);
    result.classifiers.push_back(clf);
    result.positives.push_back(std::move(positives));
    result.negatives.push_back(std::move(negatives));
    previous = clf;
    if (options.progress) options.progress->update(ledger, rep.seeds, k + 1 == plan.stages.size() ? "done" : "training");
  }
  return result;
}

std::vector<State> sample_states(const GridWorld& world, const std::vector<MapPtr>& maps, int count,
                                 int episode_length, std::mt19937_64& rng) {
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    auto episode = run_random_episode(world, sample_map(maps, rng), episode_length, rng);
    State s = episode[uniform_index(rng, episode.size())];
    s.step_count = 0;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace presca
