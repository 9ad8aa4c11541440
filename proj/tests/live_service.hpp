#pragma once

#include <filesystem>
#include <thread>

#include "elicit/http_service.hpp"
#include "elicit/session_store.hpp"
#include "support.hpp"

// After the Eigen-based headers: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace testing {

/// A store in a fresh directory served on a loopback port for the scope's lifetime.
class LiveService {
 public:
  LiveService() : LiveService(std::filesystem::path(temp_path("sessions"))) {}
  explicit LiveService(std::filesystem::path dir) : dir_(std::move(dir)), store_(dir_), service_(store_, {}) {
    port_ = service_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_.listen(); });
    service_.wait_until_ready();
  }
  ~LiveService() {
    service_.stop();
    thread_.join();
  }
  LiveService(const LiveService&) = delete;
  LiveService& operator=(const LiveService&) = delete;

  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  elicit::SessionStore store_;
  elicit::HttpService service_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace testing
