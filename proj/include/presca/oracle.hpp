#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "presca/classifier.hpp"
#include "presca/concepts.hpp"
#include "presca/gridworld.hpp"

namespace presca {

enum class Charge { positive, negative, free };
enum class BackendKind { simulated, learned, remote };

std::string_view charge_name(Charge c);
std::string_view backend_name(BackendKind k);

/// Stage budgets: N+ (positive queries), N- (negative queries), U (minimum seeds).
struct Budget {
  int n_pos = 0;
  int n_neg = 0;
  int min_seed = 0;
};

struct AuditRow {
  std::uint64_t seq = 0;
  std::int64_t wall_ms = 0;
  std::string state_hash;
  std::string state;  // canonical form
  ConceptId concept_id{};
  bool label = false;
  BackendKind backend = BackendKind::simulated;
  Charge charge = Charge::free;
};

class OracleBackend;

/// Budget accounting, label cache and audit trail for one acquisition stage.
class QueryLedger {
 public:
  explicit QueryLedger(Budget budget, std::string stage = {}) : budget_(budget), stage_(std::move(stage)) {}

  const Budget& budget() const { return budget_; }
  const std::string& stage() const { return stage_; }
  int spent_pos() const { return spent_pos_; }
  int spent_neg() const { return spent_neg_; }
  int spent() const { return spent_pos_ + spent_neg_; }
  int cache_hits() const { return cache_hits_; }
  const std::vector<AuditRow>& audit() const { return audit_; }
  std::size_t cache_size() const { return cache_.size(); }

  std::optional<bool> cached(const std::string& canonical, ConceptId c) const;
  /// Copies user labels from another ledger (warm cache); counters untouched.
  void warm_cache_from(const QueryLedger& other);

 private:
  friend bool query(QueryLedger&, OracleBackend&, const State&, ConceptId, Charge);

  Budget budget_;
  std::string stage_;
  int spent_pos_ = 0;
  int spent_neg_ = 0;
  int cache_hits_ = 0;
  std::map<std::pair<std::string, ConceptId>, bool> cache_;
  std::vector<AuditRow> audit_;
};

class OracleBackend {
 public:
  virtual ~OracleBackend() = default;
  virtual BackendKind kind() const = 0;
  virtual bool label(const State& state, ConceptId c) = 0;
};

/// Simulated user answering from ground truth.
class SimulatedOracle final : public OracleBackend {
 public:
  BackendKind kind() const override { return BackendKind::simulated; }
  bool label(const State& state, ConceptId c) override { return ground_truth(c, state); }
};

/// Answers from previously learned classifiers. Advisory: never cached, never charged.
class LearnedOracle final : public OracleBackend {
 public:
  void add(ClassifierPtr clf) { classifiers_[clf->concept_id()] = std::move(clf); }
  BackendKind kind() const override { return BackendKind::learned; }
  bool label(const State& state, ConceptId c) override;

 private:
  std::map<ConceptId, ClassifierPtr> classifiers_;
};

struct PendingQuery {
  std::uint64_t id = 0;
  ConceptId concept_id{};
  State state;
};

enum class SubmitResult { accepted, duplicate, stale, idle };

/// Hand-off point between a blocking acquisition loop (producer of questions)
/// and a labeling front end (producer of answers). One question is active at
/// a time.
class LabelExchange {
 public:
  /// Publishes a question and blocks until answered. Throws RemoteTimeout.
  bool ask(const State& state, ConceptId c, std::chrono::milliseconds timeout);
  std::optional<PendingQuery> active() const;
  /// Waits up to `timeout` for a question to become active (long polling).
  std::optional<PendingQuery> wait_active(std::chrono::milliseconds timeout) const;
  SubmitResult submit(std::uint64_t id, bool label);
  /// Signals that no further questions will come.
  void close();
  bool closed() const;
  std::uint64_t answered() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::optional<PendingQuery> active_;
  std::optional<bool> answer_;
  std::uint64_t next_id_ = 1;
  std::uint64_t last_answered_ = 0;
  std::uint64_t answered_count_ = 0;
  bool closed_ = false;
};

/// Human user reached through a LabelExchange.
class RemoteOracle final : public OracleBackend {
 public:
  RemoteOracle(LabelExchange& exchange, std::chrono::milliseconds timeout) : exchange_(exchange), timeout_(timeout) {}
  BackendKind kind() const override { return BackendKind::remote; }
  bool label(const State& state, ConceptId c) override { return exchange_.ask(state, c, timeout_); }

 private:
  LabelExchange& exchange_;
  std::chrono::milliseconds timeout_;
};

/// Returns the cached user label when present (no charge). Otherwise asks the
/// backend, charges the given budget, caches and audits. Throws BudgetExhausted
/// when the charged budget is spent.
bool query(QueryLedger& ledger, OracleBackend& backend, const State& state, ConceptId c, Charge charge);

/// (N+ left, N- left)
std::pair<int, int> remaining(const QueryLedger& ledger);
int total_spent(const std::vector<const QueryLedger*>& ledgers);
int total_spent(const std::vector<QueryLedger>& ledgers);

// -- persistence -------------------------------------------------------------

/// Header line with the stage budget, then one JSON line per audit row.
void write_audit(std::ostream& out, const QueryLedger& ledger);

struct AuditFile {
  std::string stage;
  Budget budget;
  std::vector<AuditRow> rows;
};
std::vector<AuditFile> read_audit(std::istream& in);

struct AuditCheck {
  std::size_t rows = 0;
  int charged_pos = 0;
  int charged_neg = 0;
  std::size_t conflicts = 0;         // same (state, concept) with different labels
  std::size_t budget_overruns = 0;   // stages whose charges exceed budget
  std::size_t truth_mismatches = 0;  // simulated rows disagreeing with ground truth
  bool ok() const { return conflicts == 0 && budget_overruns == 0 && truth_mismatches == 0; }
};
/// Replays audit logs; `maps` enables ground-truth re-verification of simulated rows.
AuditCheck replay_audit(const std::vector<AuditFile>& files, const std::vector<MapPtr>& maps);

/// Text dataset: one `label v1 v2 ...` line per example under a header.
void write_dataset(std::ostream& out, ConceptId c, const std::vector<State>& positives,
                   const std::vector<State>& negatives);

}  // namespace presca
