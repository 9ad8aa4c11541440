#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "elicit/serialization.hpp"
#include "elicit/session_store.hpp"
#include "elicit/sim_harness.hpp"
#include "live_service.hpp"
#include "support.hpp"

using namespace elicit;
namespace fs = std::filesystem;
using testing::LiveService;

namespace {

struct Reply {
  int status = 0;
  json body;
};

Reply get(const httplib::Client& base, const std::string& path) {
  httplib::Client c(base.host(), base.port());
  const auto r = c.Get(path);
  REQUIRE(r);
  return {r->status, json::parse(r->body)};
}

Reply post(const httplib::Client& base, const std::string& path, const std::string& body) {
  httplib::Client c(base.host(), base.port());
  const auto r = c.Post(path, body, "application/json");
  REQUIRE(r);
  return {r->status, json::parse(r->body)};
}

json session_body(std::size_t n, std::size_t m, std::uint64_t seed, const std::string& kind, bool holdout = true) {
  Hyperparameters h;
  h.rho = 0.3;
  h.fixed_sigma2 = 1.0;
  json body{{"dataset", to_json(testing::random_dataset(n, m, seed))},
            {"hyperparameters", to_json(h)},
            {"feedback_kind", kind}};
  if (holdout) body["holdout"] = to_json(testing::random_dataset(40, m, seed + 1000));
  return body;
}

std::string sessions(const std::string& id, const std::string& what) { return "/sessions/" + id + "/" + what; }

json answer(const json& query, const std::string& kind, int round) {
  const std::size_t j = query.at("feature");
  if (kind == "value") return to_json(Feedback::value(j, 0.1 * round - 1.0));
  if (round % 5 == 4) return to_json(Feedback::uncertain(j));
  return to_json(Feedback::relevance(j, round % 2 == 0));
}

std::size_t session_files(const fs::path& dir) {
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir)) count += e.path().string().ends_with(".session.json");
  return count;
}

}  // namespace

TEST_CASE("health check") {
  const LiveService svc;
  const auto r = get(svc.client(), "/healthz");
  CHECK(r.status == 200);
  CHECK(r.body.at("status") == "ok");
}

TEST_CASE("creating a session returns the first query") {
  const LiveService svc;
  const auto c = svc.client();
  const auto r = post(c, "/sessions", session_body(6, 5, 1, "relevance").dump());
  REQUIRE(r.status == 201);
  CHECK(r.body.at("revision") == 0);
  CHECK(r.body.at("status") == "pending");
  CHECK(r.body.at("kind") == "relevance");
  CHECK(r.body.at("feature").get<std::size_t>() < 5);
  CHECK(r.body.at("feature_name") == default_feature_names(5)[r.body.at("feature").get<std::size_t>()]);
  CHECK(session_files(svc.dir()) == 1);

  const auto single = post(c, "/sessions", session_body(4, 1, 2, "value").dump());
  REQUIRE(single.status == 201);
  CHECK(single.body.at("feature") == 0);
}

TEST_CASE("the first query is the argmax of the gains") {
  const LiveService svc;
  const auto c = svc.client();
  const auto r = post(c, "/sessions", session_body(6, 7, 3, "value").dump());
  const std::string id = r.body.at("session_id");
  const auto q = get(c, sessions(id, "query?gains=true"));
  const auto gains = q.body.at("gains").get<std::vector<double>>();
  REQUIRE(gains.size() == 7);
  const auto best = std::max_element(gains.begin(), gains.end()) - gains.begin();
  CHECK(q.body.at("feature") == best);
  CHECK_FALSE(get(c, sessions(id, "query")).body.contains("gains"));
}

TEST_CASE("malformed requests persist nothing") {
  const LiveService svc;
  const auto c = svc.client();
  auto body = session_body(6, 3, 1, "value");
  body["dataset"]["x"]["data"][2] = json::array({1.0});
  CHECK(post(c, "/sessions", body.dump()).status == 422);
  CHECK(post(c, "/sessions", "{not json").status == 400);
  auto bad_kind = session_body(6, 3, 1, "opinion");
  CHECK(post(c, "/sessions", bad_kind.dump()).status == 422);
  auto bad_hyper = session_body(6, 3, 1, "value");
  bad_hyper["hyperparameters"]["pi"] = 0.3;
  CHECK(post(c, "/sessions", bad_hyper.dump()).status == 422);
  CHECK(session_files(svc.dir()) == 0);
}

TEST_CASE("reads do not change state") {
  const LiveService svc;
  const auto c = svc.client();
  const std::string id = post(c, "/sessions", session_body(6, 5, 4, "relevance").dump()).body.at("session_id");
  const auto state = get(c, sessions(id, "state")).body;
  const auto q1 = get(c, sessions(id, "query")).body;
  const auto q2 = get(c, sessions(id, "query")).body;
  CHECK(q1 == q2);
  get(c, sessions(id, "export"));
  CHECK(get(c, sessions(id, "state")).body == state);
  CHECK(state.at("train_mse_history").size() == 1);
  CHECK(state.at("revision") == 0);
}

TEST_CASE("feedback advances the revision and the query") {
  const LiveService svc;
  const auto c = svc.client();
  const auto created = post(c, "/sessions", session_body(6, 5, 5, "relevance").dump()).body;
  const std::string id = created.at("session_id");
  const std::size_t first = created.at("feature");
  const auto r = post(c, sessions(id, "feedback"),
                      json{{"revision", 0}, {"feedback", to_json(Feedback::relevance(first, true))}}.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body.at("revision") == 1);
  CHECK(r.body.at("query").at("feature") != first);
  CHECK(r.body.at("holdout_mse").is_number());
  const auto state = get(c, sessions(id, "state")).body;
  CHECK(state.at("revision") == 1);
  CHECK(state.at("train_mse_history").size() == 2);
  CHECK(state.at("holdout_mse_history").size() == 2);
  CHECK(state.at("features")[first].at("queried") == true);
  CHECK(state.at("transcript").size() == 1);
}

TEST_CASE("uncertain feedback only retires the feature") {
  const LiveService svc;
  const auto c = svc.client();
  const auto created = post(c, "/sessions", session_body(6, 5, 6, "relevance").dump()).body;
  const std::string id = created.at("session_id");
  const std::size_t first = created.at("feature");
  const auto before = get(c, sessions(id, "state")).body;
  REQUIRE(post(c, sessions(id, "feedback"),
               json{{"revision", 0}, {"feedback", to_json(Feedback::uncertain(first))}}.dump())
              .status == 200);
  const auto after = get(c, sessions(id, "state")).body;
  const auto hist = after.at("train_mse_history").get<std::vector<double>>();
  REQUIRE(hist.size() == 2);
  CHECK(hist[0] == hist[1]);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(after.at("features")[j].at("mean") == before.at("features")[j].at("mean"));
    CHECK(after.at("features")[j].at("inclusion_prob") == before.at("features")[j].at("inclusion_prob"));
    CHECK(after.at("features")[j].at("queried") == (j == first));
  }
  CHECK(get(c, sessions(id, "query")).body.at("feature") != first);
}

TEST_CASE("stale, misdirected and unknown submissions are rejected") {
  const LiveService svc;
  const auto c = svc.client();
  const auto created = post(c, "/sessions", session_body(6, 5, 7, "value").dump()).body;
  const std::string id = created.at("session_id");
  const std::size_t first = created.at("feature");
  REQUIRE(post(c, sessions(id, "feedback"), json{{"revision", 0}, {"feedback", to_json(Feedback::value(first, 0.3))}}
                                                .dump())
              .status == 200);
  const auto state = get(c, sessions(id, "state")).body;
  const std::size_t next = get(c, sessions(id, "query")).body.at("feature");

  const auto stale = post(c, sessions(id, "feedback"),
                          json{{"revision", 0}, {"feedback", to_json(Feedback::value(next, 0.3))}}.dump());
  CHECK(stale.status == 409);
  CHECK(stale.body.at("error") == "conflict");
  const auto wrong = post(c, sessions(id, "feedback"),
                          json{{"revision", 1}, {"feedback", to_json(Feedback::value((next + 1) % 5, 0.3))}}.dump());
  CHECK(wrong.status == 422);
  const auto kind = post(c, sessions(id, "feedback"),
                         json{{"revision", 1}, {"feedback", to_json(Feedback::relevance(next, true))}}.dump());
  CHECK(kind.status == 422);
  CHECK(post(c, sessions(id, "feedback"), R"({"feedback": 3})").status == 400);
  CHECK(get(c, sessions(id, "state")).body == state);

  CHECK(get(c, sessions("nosuchsession", "state")).status == 404);
  CHECK(get(c, sessions("nosuchsession", "query")).status == 404);
  CHECK(post(c, sessions("nosuchsession", "feedback"),
             json{{"revision", 0}, {"feedback", to_json(Feedback::value(0, 1))}}.dump())
            .status == 404);
}

TEST_CASE("a session completes once every feature was asked") {
  const LiveService svc;
  const auto c = svc.client();
  auto q = post(c, "/sessions", session_body(5, 3, 8, "relevance").dump()).body;
  const std::string id = q.at("session_id");
  for (int k = 0; k < 3; ++k) {
    REQUIRE(q.at("status") == "pending");
    const auto r = post(c, sessions(id, "feedback"),
                        json{{"revision", k}, {"feedback", answer(q, "relevance", k)}}.dump());
    REQUIRE(r.status == 200);
    q = r.body.at("query");
  }
  CHECK(q.at("status") == "complete");
  CHECK(get(c, sessions(id, "query")).body.at("status") == "complete");
  CHECK(get(c, sessions(id, "state")).body.at("status") == "complete");
  CHECK(post(c, sessions(id, "feedback"), json{{"revision", 3}, {"feedback", to_json(Feedback::uncertain(0))}}.dump())
            .status == 409);
}

TEST_CASE("a reloaded store reproduces the state exactly") {
  const fs::path dir = testing::temp_path("reload");
  std::string id;
  json state;
  {
    const LiveService svc(dir);
    const auto c = svc.client();
    auto q = post(c, "/sessions", session_body(8, 6, 9, "value").dump()).body;
    id = q.at("session_id");
    for (int k = 0; k < 3; ++k) {
      q = post(c, sessions(id, "feedback"), json{{"revision", k}, {"feedback", answer(q, "value", k)}}.dump())
              .body.at("query");
    }
    state = get(c, sessions(id, "state")).body;
  }
  const LiveService reloaded(dir);
  const auto c = reloaded.client();
  CHECK(get(c, sessions(id, "state")).body.dump() == state.dump());
  const auto q = get(c, sessions(id, "query")).body;
  const auto r = post(c, sessions(id, "feedback"), json{{"revision", 3}, {"feedback", answer(q, "value", 3)}}.dump());
  CHECK(r.status == 200);
}

TEST_CASE("exports validate and replay to the same history") {
  const LiveService svc;
  const auto c = svc.client();
  auto q = post(c, "/sessions", session_body(8, 12, 10, "relevance").dump()).body;
  const std::string id = q.at("session_id");
  const auto fresh = get(c, sessions(id, "export")).body;
  CHECK_NOTHROW(validate_archive(fresh));
  CHECK(fresh.at("transcript").empty());

  for (int k = 0; k < 8; ++k) {
    q = post(c, sessions(id, "feedback"), json{{"revision", k}, {"feedback", answer(q, "relevance", k)}}.dump())
            .body.at("query");
  }
  const auto archive = get(c, sessions(id, "export")).body;
  CHECK_NOTHROW(validate_archive(archive));
  CHECK(archive.at("transcript").size() == 8);
  const auto replay = replay_archive(archive);
  CHECK(replay.train_mse == archive.at("train_mse_history").get<std::vector<double>>());
  CHECK(replay.holdout_mse == archive.at("holdout_mse_history").get<std::vector<double>>());

  auto broken = archive;
  broken["train_mse_history"].erase(0);
  CHECK_THROWS_AS(validate_archive(broken), ValidationError);
}

TEST_CASE("concurrent submissions at one revision accept exactly one") {
  const LiveService svc;
  const auto c = svc.client();
  for (int trial = 0; trial < 5; ++trial) {
    const auto q = post(c, "/sessions", session_body(6, 5, 20 + trial, "value").dump()).body;
    const std::string id = q.at("session_id");
    const std::string body = json{{"revision", 0}, {"feedback", answer(q, "value", trial)}}.dump();
    std::atomic<int> accepted = 0, conflicts = 0;
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&] {
        httplib::Client client(c.host(), c.port());
        const auto r = client.Post(sessions(id, "feedback"), body, "application/json");
        if (r && r->status == 200) ++accepted;
        if (r && r->status == 409) ++conflicts;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(accepted == 1);
    CHECK(conflicts == 3);
    const auto state = get(c, sessions(id, "state")).body;
    CHECK(state.at("revision") == 1);
    CHECK(state.at("transcript").size() == 1);
  }
}

TEST_CASE("session bodies fall back to service defaults") {
  ServiceDefaults defaults;
  defaults.hyper.rho = 0.25;
  defaults.ep.damping = 0.5;
  const json body{{"dataset", to_json(testing::random_dataset(4, 3, 1))}, {"feedback_kind", "value"}};
  const auto cfg = session_config_from_json(body, defaults);
  CHECK(cfg.hyper == defaults.hyper);
  CHECK(cfg.ep == defaults.ep);
  CHECK(cfg.kind == QueryKind::Value);
  CHECK_FALSE(cfg.holdout.has_value());
}
