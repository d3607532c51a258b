#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <future>
#include <set>
#include <sstream>

#include "support.hpp"

#include "httplib.h"
#include "json.hpp"
#include "presca/service.hpp"

using namespace presca;
using json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> unbase64(const std::string& text) {
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::vector<std::uint8_t> out;
  unsigned buf = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=') break;
    const auto v = alphabet.find(ch);
    REQUIRE(v != std::string::npos);
    buf = (buf << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buf >> bits) & 0xff));
    }
  }
  return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

json get(httplib::Client& cli, const std::string& path, int expect = 200) {
  auto res = cli.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  CHECK(res->get_header_value("Content-Type") == "application/json");
  return json::parse(res->body);
}

std::pair<int, json> post_label(httplib::Client& cli, const std::string& body) {
  auto res = cli.Post("/api/label", body, "application/json");
  REQUIRE(res);
  return {res->status, json::parse(res->body)};
}

std::string label_body(std::uint64_t id, bool label) { return json{{"query_id", id}, {"label", label}}.dump(); }

}  // namespace

TEST_CASE("png encoding") {
  const GridWorld w;
  const Image img = render(w.initial_state(presca::testing::seed_maps()[0]));
  const auto png = encode_png(img, 2);
  REQUIRE(png.size() > 33);
  const std::vector<std::uint8_t> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  CHECK(std::equal(sig.begin(), sig.end(), png.begin()));
  CHECK(be32(png, 16) == 96u);
  CHECK(be32(png, 20) == 96u);
  CHECK(unbase64(base64(png)) == png);
  CHECK(base64({'M', 'a', 'n'}) == "TWFu");
  CHECK_THROWS_AS(encode_png(img, 0), Error);
}

TEST_CASE("bodies without a socket") {
  LabelExchange ex;
  AcquisitionProgress progress;
  LabelService svc(ex, progress, {"127.0.0.1", 0});
  CHECK(json::parse(svc.next_query_body(0))["status"] == "idle");
  CHECK(svc.label_body("{").first == 400);
  CHECK(svc.label_body(R"({"query_id": -1, "label": true})").first == 400);
  CHECK(svc.label_body(R"({"query_id": 1, "label": "yes"})").first == 400);
  CHECK(svc.label_body(label_body(1, true)).first == 409);
  ex.close();
  CHECK(json::parse(svc.next_query_body(0))["status"] == "closed");
  const auto closed = svc.label_body(label_body(1, true));
  CHECK(closed.first == 410);
  CHECK(json::parse(closed.second)["error"].get<std::string>().find("budget exhausted") != std::string::npos);
  CHECK_THROWS_AS(LabelService(ex, progress, {"127.0.0.1", 0, "/nonexistent/ui"}), Error);
}

TEST_CASE("labeling over HTTP") {
  const GridWorld w;
  const auto maps = presca::testing::seed_maps();
  auto rng = make_rng(4);
  const auto episode = run_random_episode(w, maps[0], 200, rng);
  std::vector<State> states;
  std::set<std::string> seen;
  for (const auto& s : episode)
    if (seen.insert(canonical_string(s)).second && states.size() < 20) states.push_back(s);
  REQUIRE(states.size() == 20);

  LabelExchange ex;
  AcquisitionProgress progress;
  ServiceOptions opt;
  opt.port = 0;
  LabelService svc(ex, progress, opt);
  const int port = svc.start();
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(10, 0);

  CHECK(get(cli, "/api/next-query?wait_ms=0")["status"] == "idle");
  CHECK(get(cli, "/api/next-query?wait_ms=abc", 400)["status"] == "error");

  QueryLedger ledger({0, 20, 0}, "service");
  progress.update(ledger, 0, "negatives");
  RemoteOracle remote(ex, 10s);
  auto asker = std::async(std::launch::async, [&] {
    std::vector<bool> labels;
    for (const auto& s : states) labels.push_back(query(ledger, remote, s, ConceptId::in_storage_area, Charge::negative));
    return labels;
  });

  std::vector<bool> sent;
  std::uint64_t last = 0;
  for (int i = 0; i < 20; ++i) {
    const json q = get(cli, "/api/next-query?wait_ms=5000");
    REQUIRE(q["status"] == "active");
    CHECK(q["concept"] == "in_storage_area");
    CHECK(q["prompt"] == "Is in_storage_area true in this state?");
    CHECK(q["budget"]["n_neg"] == 20);
    const auto png = unbase64(q["image_png_base64"].get<std::string>());
    REQUIRE(png.size() > 24);
    CHECK(png[1] == 'P');
    CHECK(be32(png, 16) == static_cast<std::uint32_t>(Image::kWidth * 4));
    const auto id = q["query_id"].get<std::uint64_t>();
    CHECK(id > last);
    if (last) {
      const auto [status, body] = post_label(cli, label_body(last, true));
      CHECK(status == 200);  // repeat of the previous answer
      CHECK(body["status"] == "duplicate");
      if (last > 1) CHECK(post_label(cli, label_body(last - 1, true)).first == 409);
    }
    CHECK(post_label(cli, label_body(id + 100, true)).first == 409);
    const bool label = i % 3 == 0;
    const auto [status, body] = post_label(cli, label_body(id, label));
    CHECK(status == 200);
    CHECK(body["status"] == "accepted");
    sent.push_back(label);
    last = id;
  }
  CHECK(asker.get() == sent);
  CHECK(ledger.audit().size() == 20);
  CHECK(ledger.spent_neg() == 20);
  for (const auto& row : ledger.audit()) CHECK(row.backend == BackendKind::remote);
  CHECK(post_label(cli, "{\"query_id\": 1}").first == 400);

  progress.update(ledger, 0, "negatives");
  const json p = get(cli, "/api/progress");
  CHECK(p["answered"] == 20);
  CHECK(p["spent"]["neg"] == 20);
  CHECK(p["remaining"]["neg"] == 0);
  CHECK(p["active_query"].is_null());
  CHECK(p["closed"] == false);

  ex.close();
  CHECK(get(cli, "/api/next-query?wait_ms=1000")["status"] == "closed");
  CHECK(post_label(cli, label_body(last, true)).first == 410);
  CHECK(get(cli, "/api/progress")["closed"] == true);
  svc.stop();
}
