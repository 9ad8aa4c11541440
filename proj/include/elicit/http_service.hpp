#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "elicit/inference_ep.hpp"
#include "elicit/model.hpp"
#include "elicit/session_store.hpp"

namespace elicit {

struct ServiceDefaults {
  Hyperparameters hyper;
  EpConfig ep;
};

/// JSON-over-HTTP front end of a SessionStore.
///
///   POST /sessions                 {dataset, holdout?, hyperparameters?, ep_config?, feedback_kind}
///   GET  /sessions/{id}/query      ?gains=true adds the gain vector
///   POST /sessions/{id}/feedback   {revision, feedback}
///   GET  /sessions/{id}/state
///   GET  /sessions/{id}/export
///   GET  /healthz
///
/// Errors are {"error": kind, "message": text} with 400 (malformed body),
/// 404 (unknown session), 409 (stale revision or complete session),
/// 422 (invalid content) or 500 (numerical failure).
class HttpService {
 public:
  HttpService(SessionStore& store, ServiceDefaults defaults);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to `host:port`; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called. Requires a prior bind().
  void listen();
  void stop();
  /// Blocks until the server accepts connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Session configuration from a POST /sessions body.
SessionConfig session_config_from_json(const nlohmann::json& body, const ServiceDefaults& defaults);

}  // namespace elicit
