#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "elicit/inference_ep.hpp"
#include "elicit/model.hpp"
#include "elicit/query_design.hpp"

namespace elicit {

/// Unknown session id.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// The request cites a revision other than the current one, or the session
/// has no pending query left.
class ConflictError : public Error {
 public:
  using Error::Error;
};

struct SessionConfig {
  Dataset dataset;
  std::optional<Dataset> holdout;
  Hyperparameters hyper;
  EpConfig ep;
  QueryKind kind = QueryKind::Relevance;
};

/// Per-round summary kept for the export archive.
struct RoundSummary {
  double train_mse = 0.0;
  std::optional<double> holdout_mse;
  double expected_relevant = 0.0;  ///< sum of inclusion probabilities
  FitDiagnostics fit;
};

struct Session {
  std::string id;
  SessionConfig config;
  FeedbackLog log;
  PosteriorApprox posterior;
  /// Empty once every feature has been asked about.
  std::optional<QueryRanking> pending;
  std::uint64_t revision = 0;
  std::vector<RoundSummary> rounds;

  bool complete() const { return !pending.has_value(); }
};

/// Sessions kept in memory and mirrored to one JSON file each in `dir`.
/// Mutations of one session are serialized; different sessions proceed in
/// parallel. Every accepted change is written atomically before it becomes
/// visible.
class SessionStore {
 public:
  /// Loads every session file already present in `dir`.
  explicit SessionStore(std::filesystem::path dir);

  /// Fits the baseline, ranks the first query and persists. Returns the id.
  std::string create(SessionConfig config);

  nlohmann::json next_query(const std::string& id, bool with_gains = false) const;
  /// Throws ConflictError on a stale revision or a completed session and
  /// ValidationError when `fb` does not answer the pending query.
  nlohmann::json submit(const std::string& id, std::uint64_t revision, const Feedback& fb);
  nlohmann::json state(const std::string& id) const;
  nlohmann::json export_archive(const std::string& id) const;

  std::vector<std::string> ids() const;
  const std::filesystem::path& directory() const { return dir_; }

 private:
  struct Slot {
    mutable std::mutex mutex;
    Session session;
  };

  std::shared_ptr<Slot> find(const std::string& id) const;
  void persist(const Session& s) const;

  std::filesystem::path dir_;
  mutable std::mutex index_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

nlohmann::json to_json(const Session& s);
/// Rebuilds a session; the posterior is reassembled from the stored sites.
Session session_from_json(const nlohmann::json& j);

/// Throws ValidationError if `archive` is not a well-formed session archive.
void validate_archive(const nlohmann::json& archive);

}  // namespace elicit
