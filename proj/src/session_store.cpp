#include "elicit/session_store.hpp"

#include <random>

#include "elicit/serialization.hpp"
#include "elicit/sim_harness.hpp"

namespace elicit {

namespace {

constexpr const char* kSessionFileSuffix = ".session.json";

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard lock(mutex);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id(16, '0');
  std::uint64_t bits = rng();
  for (char& c : id) {
    c = kHex[bits & 0xF];
    bits >>= 4;
  }
  return id;
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_'; });
}

// Posterior rebuilt from its compact site encoding, so that in-memory and
// reloaded sessions hold bit-identical state.
PosteriorApprox canonical_posterior(const SiteParams& sites, const Gram& gram, const Hyperparameters& h) {
  return assemble(site_params_from_json(to_json(sites, false), &gram), h);
}

RoundSummary summarize(const PosteriorApprox& post, const SessionConfig& cfg, const FitDiagnostics& fit) {
  RoundSummary r;
  r.train_mse = mse(post, cfg.dataset);
  if (cfg.holdout) r.holdout_mse = mse(post, *cfg.holdout);
  r.expected_relevant = post.rho_bar.sum();
  r.fit = fit;
  return r;
}

std::optional<QueryRanking> rank(const Session& s) {
  if (s.log.queried().size() == s.config.dataset.m()) return std::nullopt;
  return select_next_query(s.posterior, s.config.dataset, s.log, s.config.hyper, s.config.kind, s.config.ep);
}

json round_to_json(const RoundSummary& r) {
  return json{{"train_mse", r.train_mse},
              {"holdout_mse", r.holdout_mse ? json(*r.holdout_mse) : json(nullptr)},
              {"expected_relevant", r.expected_relevant},
              {"fit", to_json(r.fit)}};
}

RoundSummary round_from_json(const json& j) {
  RoundSummary r;
  r.train_mse = j.at("train_mse").get<double>();
  if (!j.at("holdout_mse").is_null()) r.holdout_mse = j.at("holdout_mse").get<double>();
  r.expected_relevant = j.at("expected_relevant").get<double>();
  r.fit = fit_diagnostics_from_json(j.at("fit"));
  return r;
}

json mse_history(const Session& s, bool holdout) {
  json out = json::array();
  for (const auto& r : s.rounds) {
    if (!holdout) {
      out.push_back(r.train_mse);
    } else if (r.holdout_mse) {
      out.push_back(*r.holdout_mse);
    }
  }
  return out;
}

json query_json(const Session& s, bool with_gains) {
  json q{{"session_id", s.id}, {"revision", s.revision}};
  if (s.complete()) {
    q["status"] = "complete";
    return q;
  }
  const auto& p = *s.pending;
  q["status"] = "pending";
  q["feature"] = p.selected;
  q["feature_name"] = s.config.dataset.feature_names()[p.selected];
  q["kind"] = to_string(p.kind);
  if (with_gains) q["gains"] = to_json(p)["gains"];
  return q;
}

}  // namespace

json to_json(const Session& s) {
  json rounds = json::array();
  for (const auto& r : s.rounds) rounds.push_back(round_to_json(r));
  return json{{"format", "elicit.session"},
              {"version", kFormatVersion},
              {"id", s.id},
              {"revision", s.revision},
              {"dataset", to_json(s.config.dataset)},
              {"holdout", s.config.holdout ? to_json(*s.config.holdout) : json(nullptr)},
              {"hyperparameters", to_json(s.config.hyper)},
              {"ep_config", to_json(s.config.ep)},
              {"feedback_kind", to_string(s.config.kind)},
              {"feedback_log", to_json(s.log)},
              {"sites", to_json(s.posterior.sites, false)},
              {"pending", s.pending ? to_json(*s.pending) : json(nullptr)},
              {"rounds", rounds}};
}

Session session_from_json(const json& j) {
  check_envelope(j, "session");
  try {
    Session s;
    s.id = j.at("id").get<std::string>();
    if (!valid_id(s.id)) throw ValidationError("session: malformed id");
    s.revision = j.at("revision").get<std::uint64_t>();
    s.config.dataset = dataset_from_json(j.at("dataset"));
    if (!j.at("holdout").is_null()) s.config.holdout = dataset_from_json(j.at("holdout"));
    s.config.hyper = hyperparameters_from_json(j.at("hyperparameters"));
    s.config.ep = ep_config_from_json(j.at("ep_config"));
    s.config.kind = parse_query_kind(j.at("feedback_kind").get<std::string>());
    s.log = feedback_log_from_json(j.at("feedback_log"));
    const Gram gram = compute_gram(s.config.dataset);
    s.posterior = assemble(site_params_from_json(j.at("sites"), &gram), s.config.hyper);
    if (!j.at("pending").is_null()) s.pending = query_ranking_from_json(j.at("pending"));
    for (const auto& r : j.at("rounds")) s.rounds.push_back(round_from_json(r));
    if (s.rounds.size() != s.log.size() + 1) throw ValidationError("session: round history does not match log");
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("session: ") + e.what());
  }
}

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_regular_file() || name.size() <= std::string(kSessionFileSuffix).size() ||
        !name.ends_with(kSessionFileSuffix)) {
      continue;
    }
    auto slot = std::make_shared<Slot>();
    slot->session = session_from_json(read_json_file(entry.path().string()));
    slots_.emplace(slot->session.id, std::move(slot));
  }
}

std::shared_ptr<SessionStore::Slot> SessionStore::find(const std::string& id) const {
  std::lock_guard lock(index_mutex_);
  const auto it = slots_.find(id);
  if (it == slots_.end()) throw NotFoundError("unknown session '" + id + "'");
  return it->second;
}

void SessionStore::persist(const Session& s) const {
  write_json_file((dir_ / (s.id + kSessionFileSuffix)).string(), to_json(s));
}

std::string SessionStore::create(SessionConfig config) {
  validate_hyperparameters(config.hyper);
  validate_ep_config(config.ep);
  if (config.dataset.m() == 0) throw ValidationError("session: dataset has no features");
  if (config.dataset.n() == 0) throw ValidationError("session: dataset has no rows");
  if (config.holdout) {
    if (config.holdout->m() != config.dataset.m()) throw ValidationError("session: holdout has the wrong width");
    if (config.holdout->n() == 0) throw ValidationError("session: holdout has no rows");
  }

  auto slot = std::make_shared<Slot>();
  Session& s = slot->session;
  s.config = std::move(config);
  const auto state = start_elicitation(s.config.dataset, s.config.hyper, s.config.ep);
  s.log = state.log;
  s.posterior = canonical_posterior(state.posterior.sites, compute_gram(s.config.dataset), s.config.hyper);
  s.rounds.push_back(summarize(s.posterior, s.config, state.last_fit));
  s.pending = rank(s);

  std::lock_guard lock(index_mutex_);
  do {
    s.id = new_session_id();
  } while (slots_.count(s.id) != 0);
  persist(s);
  const std::string id = s.id;
  slots_.emplace(id, std::move(slot));
  return id;
}

json SessionStore::next_query(const std::string& id, bool with_gains) const {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  return query_json(slot->session, with_gains);
}

json SessionStore::submit(const std::string& id, std::uint64_t revision, const Feedback& fb) {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  const Session& cur = slot->session;
  if (revision != cur.revision) {
    throw ConflictError("stale revision " + std::to_string(revision) + "; current is " +
                        std::to_string(cur.revision));
  }
  if (cur.complete()) throw ConflictError("session is complete");
  if (fb.feature != cur.pending->selected) {
    throw ValidationError("feedback targets feature " + std::to_string(fb.feature) + " but the pending query is " +
                          std::to_string(cur.pending->selected));
  }
  if ((fb.is_value() && cur.config.kind != QueryKind::Value) ||
      (fb.is_relevance() && cur.config.kind != QueryKind::Relevance)) {
    throw ValidationError("feedback kind does not match the session's " + to_string(cur.config.kind) + " queries");
  }

  Session next = cur;
  const ElicitationState before{cur.log, cur.posterior, cur.rounds.back().fit};
  const auto after = advance_elicitation(before, cur.config.dataset, fb, cur.config.hyper, cur.config.ep);
  next.log = after.log;
  if (!fb.is_uncertain()) {
    next.posterior = canonical_posterior(after.posterior.sites, compute_gram(cur.config.dataset), cur.config.hyper);
  }
  next.rounds.push_back(summarize(next.posterior, next.config, after.last_fit));
  next.pending = rank(next);
  ++next.revision;

  persist(next);
  slot->session = std::move(next);

  const Session& s = slot->session;
  json out{{"session_id", s.id}, {"revision", s.revision}, {"train_mse", s.rounds.back().train_mse}};
  out["holdout_mse"] = s.rounds.back().holdout_mse ? json(*s.rounds.back().holdout_mse) : json(nullptr);
  out["query"] = query_json(s, false);
  return out;
}

json SessionStore::state(const std::string& id) const {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  const Session& s = slot->session;
  json features = json::array();
  const auto& names = s.config.dataset.feature_names();
  for (std::size_t j = 0; j < s.config.dataset.m(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    features.push_back({{"index", j},
                        {"name", names[j]},
                        {"mean", s.posterior.m_bar(jj)},
                        {"inclusion_prob", s.posterior.rho_bar(jj)},
                        {"queried", s.log.was_queried(j)}});
  }
  json fits = json::array();
  for (const auto& r : s.rounds) fits.push_back(to_json(r.fit));
  return json{{"session_id", s.id},
              {"revision", s.revision},
              {"status", s.complete() ? "complete" : "pending"},
              {"feedback_kind", to_string(s.config.kind)},
              {"features", features},
              {"transcript", to_json(s.log)["entries"]},
              {"train_mse_history", mse_history(s, false)},
              {"holdout_mse_history", s.config.holdout ? mse_history(s, true) : json(nullptr)},
              {"fit_diagnostics", fits}};
}

json SessionStore::export_archive(const std::string& id) const {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  const Session& s = slot->session;
  json trajectory = json::array();
  for (const auto& r : s.rounds) trajectory.push_back(round_to_json(r));
  return json{{"format", "elicit.session_archive"},
              {"version", kFormatVersion},
              {"session_id", s.id},
              {"revision", s.revision},
              {"dataset", to_json(s.config.dataset)},
              {"holdout", s.config.holdout ? to_json(*s.config.holdout) : json(nullptr)},
              {"hyperparameters", to_json(s.config.hyper)},
              {"ep_config", to_json(s.config.ep)},
              {"feedback_kind", to_string(s.config.kind)},
              {"transcript", to_json(s.log)["entries"]},
              {"train_mse_history", mse_history(s, false)},
              {"holdout_mse_history", s.config.holdout ? mse_history(s, true) : json(nullptr)},
              {"trajectory", trajectory},
              {"final_posterior",
               {{"mean", vector_to_json(s.posterior.m_bar)}, {"inclusion_probs", vector_to_json(s.posterior.rho_bar)}}}};
}

std::vector<std::string> SessionStore::ids() const {
  std::lock_guard lock(index_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, slot] : slots_) out.push_back(id);
  return out;
}

void validate_archive(const json& archive) {
  check_envelope(archive, "session_archive");
  try {
    const Dataset data = dataset_from_json(archive.at("dataset"));
    std::optional<Dataset> holdout;
    if (!archive.at("holdout").is_null()) holdout = dataset_from_json(archive.at("holdout"));
    if (holdout && holdout->m() != data.m()) throw ValidationError("archive: holdout has the wrong width");
    hyperparameters_from_json(archive.at("hyperparameters"));
    ep_config_from_json(archive.at("ep_config"));
    const QueryKind kind = parse_query_kind(archive.at("feedback_kind").get<std::string>());
    FeedbackLog log(data.m());
    for (const auto& e : archive.at("transcript")) {
      const Feedback fb = feedback_from_json(e);
      if ((fb.is_value() && kind != QueryKind::Value) || (fb.is_relevance() && kind != QueryKind::Relevance)) {
        throw ValidationError("archive: transcript entry does not match the feedback kind");
      }
      log = log.with(fb);
    }
    const std::size_t rounds = log.size() + 1;
    if (archive.at("train_mse_history").get<std::vector<double>>().size() != rounds) {
      throw ValidationError("archive: train MSE history length does not match the transcript");
    }
    if (holdout != std::nullopt) {
      if (archive.at("holdout_mse_history").get<std::vector<double>>().size() != rounds) {
        throw ValidationError("archive: holdout MSE history length does not match the transcript");
      }
    } else if (!archive.at("holdout_mse_history").is_null()) {
      throw ValidationError("archive: holdout MSE history without a holdout set");
    }
    if (archive.at("trajectory").size() != rounds) {
      throw ValidationError("archive: trajectory length does not match the transcript");
    }
    for (const auto& r : archive.at("trajectory")) round_from_json(r);
    const auto& fin = archive.at("final_posterior");
    if (static_cast<std::size_t>(vector_from_json(fin.at("mean")).size()) != data.m() ||
        static_cast<std::size_t>(vector_from_json(fin.at("inclusion_probs")).size()) != data.m()) {
      throw ValidationError("archive: final posterior has the wrong dimension");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("archive: ") + e.what());
  }
}

}  // namespace elicit
