#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grlhf/session.hpp"

namespace grlhf {

struct ServiceOptions {
  std::string token;                             // empty disables the bearer check
  std::optional<std::filesystem::path> session_dir;  // snapshot target after every mutation
  std::string cors_origin = "*";
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // names lower-cased
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::vector<std::pair<std::string, std::string>> headers;
};

/// HTTP-independent core of the v1 API. All paths are prefixed /api/v1.
/// Mutations are serialized; reads work on the last published session.
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Loads a snapshot as the active session.
  void resume(const std::filesystem::path& dir);

  ApiResponse handle(const ApiRequest& request);

  /// Blocks until no background training job is running.
  void wait_for_training();

  const ServiceOptions& options() const { return options_; }

 private:
  struct Snapshot;

  ApiResponse dispatch(const ApiRequest& request);
  ApiResponse create_session(const ApiRequest& request);
  ApiResponse current_round(const std::shared_ptr<const Snapshot>& s) const;
  ApiResponse layout(const std::shared_ptr<const Snapshot>& s) const;
  ApiResponse frames(const std::shared_ptr<const Snapshot>& s, const std::string& bid) const;
  ApiResponse history(const std::shared_ptr<const Snapshot>& s) const;
  ApiResponse suggestions(const ApiRequest& request);
  ApiResponse comparisons(const ApiRequest& request);
  ApiResponse advance();
  ApiResponse training() const;

  std::shared_ptr<const Snapshot> current() const;
  void publish(std::shared_ptr<const Snapshot> s);
  void persist(const Session& session) const;

  ServiceOptions options_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::mutex command_mu_;  // serializes mutations
  std::map<std::string, ApiResponse> idempotent_;
  std::atomic<bool> training_{false};
  std::atomic<double> progress_{0.0};
  mutable std::mutex status_mu_;
  std::string stage_;
  std::string last_error_;
  std::thread worker_;
  std::size_t sessions_created_ = 0;
};

/// OpenAPI 3 document describing every endpoint and response schema.
nlohmann::json openapi_document();

/// HTTP front end forwarding every request to a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Binds host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace grlhf
