#include "presca/service.hpp"

#include <png.h>

#include <algorithm>
#include <chrono>

#include "httplib.h"
#include "json.hpp"
#include "presca/error.hpp"

namespace presca {

using json = nlohmann::json;

std::vector<std::uint8_t> encode_png(const Image& img, int scale) {
  if (scale < 1) throw Error("encode_png: scale must be >= 1");
  const int w = Image::kWidth * scale;
  const int h = Image::kHeight * scale;
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("encode_png: libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("encode_png: libpng error");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + n);
      },
      nullptr);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(w * 3));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto px = img.pixel(y / scale, x / scale);
      std::copy(px.begin(), px.end(), row.begin() + x * 3);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::string base64(const std::vector<std::uint8_t>& bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

namespace {

json progress_json(const AcquisitionProgress::Snapshot& s) {
  return {{"stage", s.stage},
          {"stage_index", s.stage_index},
          {"stage_count", s.stage_count},
          {"target", s.stage.empty() ? "" : std::string(concept_name(s.target))},
          {"phase", s.phase},
          {"budget", {{"n_pos", s.budget.n_pos}, {"n_neg", s.budget.n_neg}, {"min_seed", s.budget.min_seed}}},
          {"spent", {{"pos", s.spent_pos}, {"neg", s.spent_neg}}},
          {"remaining",
           {{"pos", std::max(0, s.budget.n_pos - s.spent_pos)}, {"neg", std::max(0, s.budget.n_neg - s.spent_neg)}}},
          {"seeds", {{"collected", s.seeds}, {"required", s.budget.min_seed}}}};
}

void reply(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_header("Cache-Control", "no-store");
  res.set_content(body, "application/json");
}

}  // namespace

LabelService::LabelService(LabelExchange& exchange, const AcquisitionProgress& progress, ServiceOptions options)
    : exchange_(exchange), progress_(progress), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  server_->Get("/api/next-query", [this](const httplib::Request& req, httplib::Response& res) {
    int wait = 0;
    if (req.has_param("wait_ms")) {
      try {
        wait = std::stoi(req.get_param_value("wait_ms"));
      } catch (const std::exception&) {
        reply(res, 400, json{{"status", "error"}, {"error", "wait_ms must be an integer"}}.dump());
        return;
      }
    }
    reply(res, 200, next_query_body(wait));
  });
  server_->Post("/api/label", [this](const httplib::Request& req, httplib::Response& res) {
    const auto [status, body] = label_body(req.body);
    reply(res, status, body);
  });
  server_->Get("/api/progress",
               [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, progress_body()); });
  if (!options_.static_dir.empty() && !server_->set_mount_point("/", options_.static_dir)) {
    throw Error("static directory not found: " + options_.static_dir);
  }
}

LabelService::~LabelService() { stop(); }

std::string LabelService::next_query_body(int wait_ms) const {
  wait_ms = std::clamp(wait_ms, 0, options_.max_wait_ms);
  const auto q = exchange_.wait_active(std::chrono::milliseconds(wait_ms));
  const auto snap = progress_.snapshot();
  json body = progress_json(snap);
  if (!q) {
    body["status"] = exchange_.closed() ? "closed" : "idle";
    return body.dump();
  }
  const std::string name(concept_name(q->concept_id));
  body["status"] = "active";
  body["query_id"] = q->id;
  body["concept"] = name;
  body["prompt"] = "Is " + name + " true in this state?";
  body["image_png_base64"] = base64(encode_png(render(q->state), options_.image_scale));
  return body.dump();
}

std::string LabelService::progress_body() const {
  json body = progress_json(progress_.snapshot());
  body["answered"] = exchange_.answered();
  body["closed"] = exchange_.closed();
  const auto q = exchange_.active();
  body["active_query"] = q ? json(q->id) : json(nullptr);
  return body.dump();
}

std::pair<int, std::string> LabelService::label_body(const std::string& request) const {
  std::uint64_t id = 0;
  bool label = false;
  try {
    const json j = json::parse(request);
    if (!j.contains("query_id") || !j.contains("label") || !j["label"].is_boolean() ||
        !j["query_id"].is_number_unsigned()) {
      throw Error("expected {\"query_id\": <uint>, \"label\": <bool>}");
    }
    id = j["query_id"].get<std::uint64_t>();
    label = j["label"].get<bool>();
  } catch (const std::exception& e) {
    return {400, json{{"status", "error"}, {"error", e.what()}}.dump()};
  }
  if (exchange_.closed()) {
    return {410, json{{"status", "closed"}, {"error", "acquisition finished: budget exhausted or run complete"}}.dump()};
  }
  switch (exchange_.submit(id, label)) {
    case SubmitResult::accepted: return {200, json{{"status", "accepted"}, {"query_id", id}}.dump()};
    // Repeats of the last answer are acknowledged so double submits are harmless.
    case SubmitResult::duplicate: return {200, json{{"status", "duplicate"}, {"query_id", id}}.dump()};
    case SubmitResult::stale:
      return {409, json{{"status", "stale"}, {"error", "query " + std::to_string(id) + " is not active"}}.dump()};
    case SubmitResult::idle: return {409, json{{"status", "idle"}, {"error", "no active query"}}.dump()};
  }
  return {500, "{}"};
}

int LabelService::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
    if (port_ <= 0) throw Error("cannot bind " + options_.host);
  } else {
    if (!server_->bind_to_port(options_.host, options_.port)) {
      throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    port_ = options_.port;
  }
  return port_;
}

void LabelService::run() { server_->listen_after_bind(); }

int LabelService::start() {
  const int p = bind();
  thread_ = std::thread([this] { run(); });
  server_->wait_until_ready();
  return p;
}

void LabelService::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace presca
