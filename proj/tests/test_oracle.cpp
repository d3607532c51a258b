#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <future>
#include <sstream>
#include <thread>

#include "support.hpp"

using namespace presca;
using namespace std::chrono_literals;

namespace {

State carrying_stick(const State& s) {
  State t = s;
  t.item_place[0] = State::kCarried;
  t.collected |= 1;
  return t;
}

}  // namespace

TEST_CASE("budget and dedup against a reference ledger") {
  const auto r = presca::testing::check_budget_dedup(1000, 7);
  MESSAGE(r.detail);
  CHECK(r.pass);
}

TEST_CASE("simulated answers, charges and cache") {
  const GridWorld w;
  const auto maps = presca::testing::seed_maps();
  const State s = w.initial_state(maps[0]);
  const State t = carrying_stick(s);
  QueryLedger ledger({1, 1, 0}, "unit");
  SimulatedOracle user;
  CHECK(query(ledger, user, t, ConceptId::has_stick, Charge::positive));
  CHECK_FALSE(query(ledger, user, s, ConceptId::has_stick, Charge::negative));
  // Repeats are free even with the budget spent.
  CHECK(query(ledger, user, t, ConceptId::has_stick, Charge::positive));
  CHECK(ledger.cache_hits() == 1);
  // step_count does not make a state new.
  State later = t;
  later.step_count = 42;
  CHECK(query(ledger, user, later, ConceptId::has_stick, Charge::negative));
  CHECK(ledger.cache_hits() == 2);
  CHECK_THROWS_AS(query(ledger, user, s, ConceptId::has_plank, Charge::positive), BudgetExhausted);
  CHECK(query(ledger, user, s, ConceptId::has_plank, Charge::free) == false);
  CHECK(ledger.spent() == 2);
  CHECK(remaining(ledger) == std::pair{0, 0});
  CHECK(ledger.audit().size() == 3);
}

TEST_CASE("learned answers are advisory") {
  const GridWorld w;
  const auto maps = presca::testing::seed_maps();
  auto rng = make_rng(5);
  std::vector<State> pos, neg;
  for (const auto& s : sample_states(w, maps, 800, 100, rng)) (ground_truth(ConceptId::has_stick, s) ? pos : neg).push_back(s);
  TrainConfig cfg;
  cfg.epochs = 60;
  auto clf = std::make_shared<const ConceptClassifier>(train_classifier(ConceptId::has_stick, pos, neg, cfg, rng));
  LearnedOracle model;
  model.add(clf);
  QueryLedger ledger({0, 0, 0});
  const State s = w.initial_state(maps[0]);
  const bool first = query(ledger, model, s, ConceptId::has_stick, Charge::positive);
  CHECK(first == clf->predict(s));
  CHECK(ledger.spent() == 0);
  CHECK(ledger.cache_size() == 0);
  CHECK(ledger.audit().back().backend == BackendKind::learned);
  CHECK(ledger.audit().back().charge == Charge::free);
  CHECK_THROWS_AS(query(ledger, model, s, ConceptId::has_plank, Charge::free), Error);
}

TEST_CASE("warm cache") {
  const GridWorld w;
  const State s = w.initial_state(presca::testing::seed_maps()[0]);
  SimulatedOracle user;
  QueryLedger first({5, 5, 0});
  query(first, user, s, ConceptId::has_stick, Charge::negative);
  QueryLedger second({5, 5, 0});
  second.warm_cache_from(first);
  query(second, user, s, ConceptId::has_stick, Charge::negative);
  CHECK(second.spent() == 0);
  CHECK(second.cache_hits() == 1);
  CHECK(second.audit().empty());
}

TEST_CASE("audit round trip and replay") {
  const GridWorld w;
  const auto maps = presca::testing::seed_maps();
  auto rng = make_rng(9);
  QueryLedger ledger({30, 30, 0}, "stage1_x");
  SimulatedOracle user;
  for (const auto& s : run_random_episode(w, maps[1], 40, rng)) {
    query(ledger, user, s, ConceptId::in_storage_area, ground_truth(ConceptId::in_storage_area, s) ? Charge::positive : Charge::negative);
  }
  std::stringstream io;
  write_audit(io, ledger);
  const auto files = read_audit(io);
  REQUIRE(files.size() == 1);
  CHECK(files[0].stage == "stage1_x");
  CHECK(files[0].budget.n_pos == 30);
  CHECK(files[0].rows.size() == ledger.audit().size());
  const AuditCheck check = replay_audit(files, maps);
  CHECK(check.ok());
  CHECK(check.charged_pos + check.charged_neg == ledger.spent());

  auto tampered = files;
  tampered[0].rows.front().label = !tampered[0].rows.front().label;
  CHECK(replay_audit(tampered, maps).truth_mismatches == 1);
  tampered[0].budget.n_neg = 0;
  CHECK(replay_audit(tampered, maps).budget_overruns == 1);
  auto dup = files;
  dup[0].rows.push_back(dup[0].rows.front());
  dup[0].rows.back().label = !dup[0].rows.back().label;
  CHECK(replay_audit(dup, {}).conflicts == 1);

  std::istringstream bad("{\"seq\": 1}\n");
  CHECK_THROWS_AS(read_audit(bad), ParseError);
}

TEST_CASE("label exchange hands questions to a labeler") {
  const GridWorld w;
  const State s = w.initial_state(presca::testing::seed_maps()[0]);
  LabelExchange ex;
  CHECK(ex.submit(1, true) == SubmitResult::idle);
  auto asker = std::async(std::launch::async, [&] { return ex.ask(s, ConceptId::has_stick, 5s); });
  const auto q = ex.wait_active(5s);
  REQUIRE(q);
  CHECK(q->concept_id == ConceptId::has_stick);
  CHECK(ex.submit(q->id + 1, true) == SubmitResult::stale);
  CHECK(ex.submit(q->id, true) == SubmitResult::accepted);
  CHECK(asker.get());
  CHECK(ex.submit(q->id, true) == SubmitResult::duplicate);
  CHECK(ex.answered() == 1);

  CHECK_THROWS_AS(ex.ask(s, ConceptId::has_stick, 20ms), RemoteTimeout);
  CHECK_FALSE(ex.active());
  CHECK(ex.submit(q->id + 1, false) == SubmitResult::stale);

  auto closing = std::async(std::launch::async, [&] { return ex.ask(s, ConceptId::has_plank, 5s); });
  ex.wait_active(5s);
  ex.close();
  CHECK_THROWS_AS(closing.get(), RemoteTimeout);
  CHECK(ex.closed());
  CHECK_THROWS_AS(ex.ask(s, ConceptId::has_plank, 5s), RemoteTimeout);
}

TEST_CASE("remote oracle goes through the exchange") {
  const GridWorld w;
  const State s = w.initial_state(presca::testing::seed_maps()[0]);
  LabelExchange ex;
  RemoteOracle remote(ex, 5s);
  QueryLedger ledger({2, 2, 0});
  std::thread labeler([&] {
    for (int i = 0; i < 2; ++i) {
      const auto q = ex.wait_active(5s);
      if (q) ex.submit(q->id, ground_truth(q->concept_id, q->state));
    }
  });
  CHECK_FALSE(query(ledger, remote, s, ConceptId::has_stick, Charge::negative));
  CHECK(query(ledger, remote, carrying_stick(s), ConceptId::has_stick, Charge::positive));
  labeler.join();
  CHECK(ledger.audit().back().backend == BackendKind::remote);
  CHECK(ledger.spent() == 2);
}

TEST_CASE("dataset text") {
  const GridWorld w;
  const State s = w.initial_state(presca::testing::seed_maps()[0]);
  std::ostringstream out;
  write_dataset(out, ConceptId::has_stick, {carrying_stick(s)}, {s});
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header.find("concept=has_stick") != std::string::npos);
  std::getline(in, line);
  std::istringstream row(line);
  int label = -1;
  row >> label;
  CHECK(label == 1);
  std::vector<double> x;
  for (double v; row >> v;) x.push_back(v);
  CHECK(x == encode(carrying_stick(s)).flattened());
}
