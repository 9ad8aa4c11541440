#include "elicit/http_service.hpp"

#include <httplib.h>

#include <functional>

#include "elicit/serialization.hpp"

namespace elicit {

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  reply(res, status, json{{"error", kind}, {"message", message}});
}

// Runs `fn` and maps exceptions to status codes.
void guarded(httplib::Response& res, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    reply_error(res, 404, "not_found", e.what());
  } catch (const ConflictError& e) {
    reply_error(res, 409, "conflict", e.what());
  } catch (const json::exception& e) {
    reply_error(res, 400, "bad_request", e.what());
  } catch (const NumericalError& e) {
    reply_error(res, 500, "numerical_failure", e.what());
  } catch (const ValidationError& e) {
    reply_error(res, 422, "invalid", e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, "internal", e.what());
  }
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body);
  if (!body.is_object()) throw ValidationError("request body must be a JSON object");
  return body;
}

}  // namespace

SessionConfig session_config_from_json(const json& body, const ServiceDefaults& defaults) {
  SessionConfig cfg;
  cfg.dataset = dataset_from_json(body.at("dataset"));
  if (body.contains("holdout") && !body.at("holdout").is_null()) cfg.holdout = dataset_from_json(body.at("holdout"));
  cfg.hyper = body.contains("hyperparameters") ? hyperparameters_from_json(body.at("hyperparameters"))
                                               : validate_hyperparameters(defaults.hyper);
  cfg.ep = body.contains("ep_config") ? ep_config_from_json(body.at("ep_config")) : validate_ep_config(defaults.ep);
  cfg.kind = parse_query_kind(body.at("feedback_kind").get<std::string>());
  return cfg;
}

struct HttpService::Impl {
  SessionStore& store;
  ServiceDefaults defaults;
  httplib::Server server;

  Impl(SessionStore& s, ServiceDefaults d) : store(s), defaults(std::move(d)) {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, json{{"status", "ok"}});
    });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto id = store.create(session_config_from_json(parse_body(req), defaults));
        reply(res, 201, store.next_query(id));
      });
    });

    server.Get(R"(/sessions/([^/]+)/query)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const bool gains = req.has_param("gains") && req.get_param_value("gains") == "true";
        reply(res, 200, store.next_query(req.matches[1], gains));
      });
    });

    server.Post(R"(/sessions/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const auto revision = body.at("revision").get<std::uint64_t>();
        reply(res, 200, store.submit(req.matches[1], revision, feedback_from_json(body.at("feedback"))));
      });
    });

    server.Get(R"(/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, store.state(req.matches[1])); });
    });

    server.Get(R"(/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, store.export_archive(req.matches[1])); });
    });
  }
};

HttpService::HttpService(SessionStore& store, ServiceDefaults defaults)
    : impl_(std::make_unique<Impl>(store, std::move(defaults))) {}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind to " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind to " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace elicit
