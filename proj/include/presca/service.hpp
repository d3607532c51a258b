#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "presca/acquisition.hpp"
#include "presca/gridworld.hpp"
#include "presca/oracle.hpp"

namespace httplib {
class Server;
}

namespace presca {

/// RGB PNG of `img`, each pixel blown up to a scale x scale block.
std::vector<std::uint8_t> encode_png(const Image& img, int scale = 1);
std::string base64(const std::vector<std::uint8_t>& bytes);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  /// 0 binds an ephemeral port.
  int port = 8765;
  /// Served at / when non-empty (the labeling UI bundle).
  std::string static_dir;
  /// Upper bound on the long-poll wait a client may request.
  int max_wait_ms = 25000;
  int image_scale = 4;
};

/// HTTP bridge between a LabelExchange and the labeling UI.
///
///   GET  /api/next-query?wait_ms=N  active question (long-polls up to N ms)
///   POST /api/label                 {"query_id": n, "label": true|false}
///   GET  /api/progress              stage, budget and seed counters
class LabelService {
 public:
  LabelService(LabelExchange& exchange, const AcquisitionProgress& progress, ServiceOptions options = {});
  ~LabelService();
  LabelService(const LabelService&) = delete;
  LabelService& operator=(const LabelService&) = delete;

  /// Binds the socket and returns the port.
  int bind();
  /// Serves on the calling thread until stop().
  void run();
  /// bind() + serve on a background thread.
  int start();
  void stop();
  int port() const { return port_; }

  // Response bodies, also reachable without a socket.
  std::string next_query_body(int wait_ms) const;
  std::string progress_body() const;
  /// Returns (HTTP status, body).
  std::pair<int, std::string> label_body(const std::string& request) const;

 private:
  LabelExchange& exchange_;
  const AcquisitionProgress& progress_;
  ServiceOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace presca
