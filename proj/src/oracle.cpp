#include "presca/oracle.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "presca/error.hpp"

namespace presca {

using json = nlohmann::json;

std::string_view charge_name(Charge c) {
  switch (c) {
    case Charge::positive: return "positive";
    case Charge::negative: return "negative";
    case Charge::free: return "free";
  }
  return "?";
}

std::string_view backend_name(BackendKind k) {
  switch (k) {
    case BackendKind::simulated: return "simulated";
    case BackendKind::learned: return "learned";
    case BackendKind::remote: return "remote";
  }
  return "?";
}

namespace {

Charge parse_charge(const std::string& s) {
  if (s == "positive") return Charge::positive;
  if (s == "negative") return Charge::negative;
  if (s == "free") return Charge::free;
  throw Error("unknown charge '" + s + "'");
}

BackendKind parse_backend(const std::string& s) {
  if (s == "simulated") return BackendKind::simulated;
  if (s == "learned") return BackendKind::learned;
  if (s == "remote") return BackendKind::remote;
  throw Error("unknown backend '" + s + "'");
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

std::optional<bool> QueryLedger::cached(const std::string& canonical, ConceptId c) const {
  auto it = cache_.find({canonical, c});
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

void QueryLedger::warm_cache_from(const QueryLedger& other) {
  for (const auto& [k, v] : other.cache_) cache_.emplace(k, v);
}

bool LearnedOracle::label(const State& state, ConceptId c) {
  auto it = classifiers_.find(c);
  if (it == classifiers_.end()) throw Error("no learned classifier for " + std::string(concept_name(c)));
  return it->second->predict(state);
}

bool query(QueryLedger& ledger, OracleBackend& backend, const State& state, ConceptId c, Charge charge) {
  std::string key = canonical_string(state);
  if (auto hit = ledger.cached(key, c)) {
    ++ledger.cache_hits_;
    return *hit;
  }

  const bool advisory = backend.kind() == BackendKind::learned;
  if (advisory) charge = Charge::free;
  if (charge == Charge::positive && ledger.spent_pos_ >= ledger.budget_.n_pos)
    throw BudgetExhausted("positive query budget exhausted (" + std::to_string(ledger.budget_.n_pos) + ")");
  if (charge == Charge::negative && ledger.spent_neg_ >= ledger.budget_.n_neg)
    throw BudgetExhausted("negative query budget exhausted (" + std::to_string(ledger.budget_.n_neg) + ")");

  const bool label = backend.label(state, c);

  if (charge == Charge::positive) ++ledger.spent_pos_;
  if (charge == Charge::negative) ++ledger.spent_neg_;

  AuditRow row;
  row.seq = ledger.audit_.size();
  row.wall_ms = now_ms();
  row.state_hash = hex_hash(state_hash(state));
  row.state = key;
  row.concept_id = c;
  row.label = label;
  row.backend = backend.kind();
  row.charge = charge;
  ledger.audit_.push_back(std::move(row));

  if (!advisory) ledger.cache_.emplace(std::pair{std::move(key), c}, label);
  return label;
}

std::pair<int, int> remaining(const QueryLedger& ledger) {
  return {ledger.budget().n_pos - ledger.spent_pos(), ledger.budget().n_neg - ledger.spent_neg()};
}

int total_spent(const std::vector<const QueryLedger*>& ledgers) {
  int total = 0;
  for (const auto* l : ledgers) total += l->spent();
  return total;
}

int total_spent(const std::vector<QueryLedger>& ledgers) {
  int total = 0;
  for (const auto& l : ledgers) total += l.spent();
  return total;
}

// -- label exchange -------------------------------------------------------------

bool LabelExchange::ask(const State& state, ConceptId c, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (closed_) throw RemoteTimeout("label exchange closed");
  const std::uint64_t id = next_id_++;
  active_ = PendingQuery{id, c, state};
  answer_.reset();
  cv_.notify_all();
  const bool answered = cv_.wait_for(lock, timeout, [&] { return answer_.has_value() || closed_; });
  if (!answered || !answer_) {
    active_.reset();
    throw RemoteTimeout("no label received for query " + std::to_string(id));
  }
  const bool label = *answer_;
  answer_.reset();
  return label;
}

std::optional<PendingQuery> LabelExchange::active() const {
  std::lock_guard lock(mu_);
  return active_;
}

std::optional<PendingQuery> LabelExchange::wait_active(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return active_.has_value() || closed_; });
  return active_;
}

SubmitResult LabelExchange::submit(std::uint64_t id, bool label) {
  std::lock_guard lock(mu_);
  if (id != 0 && id == last_answered_) return SubmitResult::duplicate;
  if (!active_) return id != 0 && id < next_id_ ? SubmitResult::stale : SubmitResult::idle;
  if (id != active_->id) return SubmitResult::stale;
  answer_ = label;
  last_answered_ = id;
  ++answered_count_;
  active_.reset();
  cv_.notify_all();
  return SubmitResult::accepted;
}

void LabelExchange::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  active_.reset();
  cv_.notify_all();
}

bool LabelExchange::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::uint64_t LabelExchange::answered() const {
  std::lock_guard lock(mu_);
  return answered_count_;
}

// -- persistence -------------------------------------------------------------------

void write_audit(std::ostream& out, const QueryLedger& ledger) {
  const auto& b = ledger.budget();
  json header = {{"schema", "presca.audit"}, {"version", 1},     {"stage", ledger.stage()},
                 {"n_pos", b.n_pos},         {"n_neg", b.n_neg}, {"min_seed", b.min_seed}};
  out << header.dump() << '\n';
  for (const auto& r : ledger.audit()) {
    json row = {{"seq", r.seq},
                {"wall_ms", r.wall_ms},
                {"state_hash", r.state_hash},
                {"state", r.state},
                {"concept", concept_name(r.concept_id)},
                {"label", r.label},
                {"backend", backend_name(r.backend)},
                {"charge", charge_name(r.charge)}};
    out << row.dump() << '\n';
  }
}

std::vector<AuditFile> read_audit(std::istream& in) {
  std::vector<AuditFile> files;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    try {
      if (j.contains("schema")) {
        if (j.at("schema") != "presca.audit") throw ParseError(lineno, "unexpected schema");
        AuditFile f;
        f.stage = j.at("stage").get<std::string>();
        f.budget = {j.at("n_pos").get<int>(), j.at("n_neg").get<int>(), j.at("min_seed").get<int>()};
        files.push_back(std::move(f));
        continue;
      }
      if (files.empty()) throw ParseError(lineno, "audit row before header");
      AuditRow r;
      r.seq = j.at("seq").get<std::uint64_t>();
      r.wall_ms = j.at("wall_ms").get<std::int64_t>();
      r.state_hash = j.at("state_hash").get<std::string>();
      r.state = j.at("state").get<std::string>();
      r.concept_id = concept_from_name(j.at("concept").get<std::string>());
      r.label = j.at("label").get<bool>();
      r.backend = parse_backend(j.at("backend").get<std::string>());
      r.charge = parse_charge(j.at("charge").get<std::string>());
      files.back().rows.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return files;
}

AuditCheck replay_audit(const std::vector<AuditFile>& files, const std::vector<MapPtr>& maps) {
  AuditCheck check;
  for (const auto& f : files) {
    std::map<std::pair<std::string, ConceptId>, bool> seen;
    int pos = 0, neg = 0;
    for (const auto& r : f.rows) {
      ++check.rows;
      if (r.charge == Charge::positive) ++pos;
      if (r.charge == Charge::negative) ++neg;
      if (r.backend == BackendKind::learned) continue;
      auto [it, inserted] = seen.emplace(std::pair{r.state, r.concept_id}, r.label);
      if (!inserted && it->second != r.label) ++check.conflicts;
      if (r.backend == BackendKind::simulated && !maps.empty()) {
        const State s = parse_canonical(r.state, maps);
        if (ground_truth(r.concept_id, s) != r.label) ++check.truth_mismatches;
      }
    }
    check.charged_pos += pos;
    check.charged_neg += neg;
    if (pos > f.budget.n_pos || neg > f.budget.n_neg) ++check.budget_overruns;
  }
  return check;
}

void write_dataset(std::ostream& out, ConceptId c, const std::vector<State>& positives,
                   const std::vector<State>& negatives) {
  out << "# presca-dataset 1 concept=" << concept_name(c) << " positives=" << positives.size()
      << " negatives=" << negatives.size() << '\n';
  char buf[32];
  auto emit = [&](const State& s, int label) {
    out << label;
    for (double v : encode(s).flattened()) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  };
  for (const auto& s : positives) emit(s, 1);
  for (const auto& s : negatives) emit(s, 0);
}

}  // namespace presca
