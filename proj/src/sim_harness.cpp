#include "elicit/sim_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "elicit/query_design.hpp"
#include "elicit/serialization.hpp"

namespace elicit {

namespace {

std::mt19937_64 keyed_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

MatrixXd standard_normal(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  // Row by row so that a prefix of rows does not depend on the total count.
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = z(rng);
  }
  return a;
}

Dataset simulate_rows(std::mt19937_64& rng, std::size_t rows, const VectorXd& w, double sigma2,
                      const std::vector<std::string>& names) {
  MatrixXd x = standard_normal(rng, rows, static_cast<std::size_t>(w.size()));
  std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));
  VectorXd y = x * w;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += noise(rng);
  return Dataset(std::move(x), std::move(y), names);
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace

SyntheticProblem generate_synthetic(const SyntheticSpec& spec) {
  if (spec.m == 0 || spec.m_star > spec.m) throw ValidationError("synthetic spec: need 0 <= m_star <= m, m > 0");
  if (!(spec.psi2 > 0) || !(spec.sigma2 > 0)) throw ValidationError("synthetic spec: psi2 and sigma2 must be > 0");
  if (spec.n_test == 0) throw ValidationError("synthetic spec: n_test must be positive");

  std::mt19937_64 rng(spec.seed);
  SyntheticProblem out;
  auto& truth = out.truth;
  truth.m_star = spec.m_star;
  truth.gamma_true.assign(spec.m, 0);
  std::fill_n(truth.gamma_true.begin(), spec.m_star, 1);
  std::shuffle(truth.gamma_true.begin(), truth.gamma_true.end(), rng);
  truth.w_true = VectorXd::Zero(static_cast<Eigen::Index>(spec.m));
  std::normal_distribution<double> slab(0.0, std::sqrt(spec.psi2));
  for (std::size_t j = 0; j < spec.m; ++j) {
    if (truth.gamma_true[j]) truth.w_true(static_cast<Eigen::Index>(j)) = slab(rng);
  }

  const auto names = default_feature_names(spec.m);
  out.train = simulate_rows(rng, spec.n, truth.w_true, spec.sigma2, names);
  out.test = simulate_rows(rng, spec.n_test, truth.w_true, spec.sigma2, names);
  out.pool = simulate_rows(rng, spec.n_pool, truth.w_true, spec.sigma2, names);
  return out;
}

QueryKind query_kind_for(const SimulatedUser& user) {
  return std::holds_alternative<ValueOracle>(user) ? QueryKind::Value : QueryKind::Relevance;
}

Feedback simulated_value_feedback(const ValueOracle& user, std::size_t j, std::uint64_t draw) {
  if (j >= static_cast<std::size_t>(user.w_true.size())) throw ValidationError("value oracle: index out of range");
  const double w = user.w_true(static_cast<Eigen::Index>(j));
  if (user.omega == 0.0) return Feedback::value(j, w);
  auto rng = keyed_stream(user.seed, j, draw);
  std::normal_distribution<double> dist(w, user.omega);
  return Feedback::value(j, dist(rng));
}

Feedback simulated_relevance_feedback(const RelevanceOracle& user, std::size_t j, std::uint64_t draw) {
  if (j >= user.gamma_true.size()) throw ValidationError("relevance oracle: index out of range");
  const bool truth = user.gamma_true[j] != 0;
  auto rng = keyed_stream(user.seed, j, draw);
  std::bernoulli_distribution correct(user.pi);
  return Feedback::relevance(j, correct(rng) ? truth : !truth);
}

Feedback data_driven_relevance_feedback(const DataDrivenRelevance& user, std::size_t j) {
  if (j >= static_cast<std::size_t>(user.inclusion_probs.size())) {
    throw ValidationError("data-driven user: index out of range");
  }
  const double p = user.inclusion_probs(static_cast<Eigen::Index>(j));
  if (p > user.pi) return Feedback::relevance(j, true);
  if (p < 1.0 - user.pi) return Feedback::relevance(j, false);
  return Feedback::uncertain(j);
}

Feedback ask(const SimulatedUser& user, std::size_t j) {
  return std::visit(
      [j](const auto& u) -> Feedback {
        using T = std::decay_t<decltype(u)>;
        if constexpr (std::is_same_v<T, ValueOracle>) {
          return simulated_value_feedback(u, j);
        } else if constexpr (std::is_same_v<T, RelevanceOracle>) {
          return simulated_relevance_feedback(u, j);
        } else {
          return data_driven_relevance_feedback(u, j);
        }
      },
      user);
}

UserModelFit build_data_driven_user(const Dataset& user_data, const Hyperparameters& h, const EpConfig& cfg) {
  if (user_data.n() == 0) throw ValidationError("data-driven user: user data is empty");
  auto fit = fit_posterior(user_data, FeedbackLog(user_data.m()), h, cfg);
  return {DataDrivenRelevance{fit.posterior.rho_bar, h.pi}, fit.diagnostics};
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::Sequential: return "sequential";
    case Strategy::NonSequential: return "nonsequential";
    case Strategy::OracleFirst: return "oracle_first";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "random") return Strategy::Random;
  if (s == "sequential") return Strategy::Sequential;
  if (s == "nonsequential") return Strategy::NonSequential;
  if (s == "oracle_first") return Strategy::OracleFirst;
  throw ValidationError("unknown strategy '" + s + "'");
}

double mse(const PosteriorApprox& post, const Dataset& data) {
  if (data.n() == 0) throw ValidationError("mse: empty dataset");
  return (data.y() - data.x() * post.m_bar).squaredNorm() / static_cast<double>(data.n());
}

StrategyRunResult run_strategy(Strategy strategy, const ElicitationProblem& problem, const SimulatedUser& user,
                               const Hyperparameters& h, const EpConfig& cfg, std::size_t rounds,
                               std::uint64_t seed) {
  const std::size_t m = problem.train.m();
  if (rounds > m) throw ValidationError("run strategy: rounds exceed the number of features");
  if (problem.relevant.size() != m) throw ValidationError("run strategy: relevant set has the wrong size");
  const QueryKind kind = query_kind_for(user);

  StrategyRunResult result;
  result.strategy = to_string(strategy);
  auto state = start_elicitation(problem.train, h, cfg);
  result.test_mse.push_back(mse(state.posterior, problem.test));
  result.train_mse.push_back(mse(state.posterior, problem.train));
  result.relevant_queried.push_back(0);
  result.round_seconds.push_back(0.0);
  result.fits.push_back(state.last_fit);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order;
  switch (strategy) {
    case Strategy::Random:
      order = permutation(m, rng);
      break;
    case Strategy::OracleFirst: {
      const auto p = permutation(m, rng);
      for (std::size_t j : p) if (problem.relevant[j]) order.push_back(j);
      for (std::size_t j : p) if (!problem.relevant[j]) order.push_back(j);
      break;
    }
    case Strategy::NonSequential:
      order = nonsequential_ranking(state.posterior, problem.train, h, kind, cfg);
      break;
    case Strategy::Sequential:
      break;
  }

  std::size_t relevant_count = 0;
  for (std::size_t k = 0; k < rounds; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t j = strategy == Strategy::Sequential
                              ? select_next_query(state.posterior, problem.train, state.log, h, kind, cfg).selected
                              : order[k];
    const Feedback fb = ask(user, j);
    state = advance_elicitation(state, problem.train, fb, h, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (problem.relevant[j]) ++relevant_count;
    result.transcript.push_back(fb);
    result.test_mse.push_back(mse(state.posterior, problem.test));
    result.train_mse.push_back(mse(state.posterior, problem.train));
    result.relevant_queried.push_back(relevant_count);
    result.round_seconds.push_back(secs);
    result.fits.push_back(state.last_fit);
  }
  return result;
}

FeedbackVsSamplesCurves feedbacks_vs_samples_curves(const Dataset& pool, const ElicitationProblem& problem,
                                                    const SimulatedUser& user, const Hyperparameters& h,
                                                    const EpConfig& cfg, std::size_t cap, std::uint64_t seed) {
  if (cap > problem.train.m()) throw ValidationError("feedbacks vs samples: cap exceeds the number of features");
  if (cap > pool.n()) throw ValidationError("feedbacks vs samples: cap exceeds the pool size");
  if (pool.m() != problem.train.m()) throw ValidationError("feedbacks vs samples: pool has the wrong width");

  FeedbackVsSamplesCurves curves;
  curves.random_feedback = run_strategy(Strategy::Random, problem, user, h, cfg, cap, seed).test_mse;
  curves.sequential_feedback = run_strategy(Strategy::Sequential, problem, user, h, cfg, cap, seed).test_mse;

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const auto order = permutation(pool.n(), rng);
  const auto n0 = static_cast<Eigen::Index>(problem.train.n());
  MatrixXd x(n0 + static_cast<Eigen::Index>(cap), problem.train.m());
  VectorXd y(x.rows());
  x.topRows(n0) = problem.train.x();
  y.head(n0) = problem.train.y();
  for (std::size_t k = 0; k < cap; ++k) {
    x.row(n0 + static_cast<Eigen::Index>(k)) = pool.x().row(static_cast<Eigen::Index>(order[k]));
    y(n0 + static_cast<Eigen::Index>(k)) = pool.y()(static_cast<Eigen::Index>(order[k]));
  }

  const FeedbackLog empty(problem.train.m());
  auto fit = fit_posterior(problem.train, empty, h, cfg);
  curves.random_samples.push_back(mse(fit.posterior, problem.test));
  for (std::size_t k = 1; k <= cap; ++k) {
    const auto rows = n0 + static_cast<Eigen::Index>(k);
    Dataset grown(x.topRows(rows), y.head(rows), problem.train.feature_names());
    fit = fit_posterior(grown, empty, h, cfg, fit.posterior.sites);
    curves.random_samples.push_back(mse(fit.posterior, problem.test));
  }
  return curves;
}

std::optional<std::size_t> first_round_at_or_below(const std::vector<double>& curve, double level) {
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (curve[k] <= level) return k;
  }
  return std::nullopt;
}

std::vector<LevelRow> rounds_to_levels(const FeedbackVsSamplesCurves& curves, const std::vector<double>& levels) {
  std::vector<LevelRow> rows;
  for (double level : levels) {
    rows.push_back({level, first_round_at_or_below(curves.random_feedback, level),
                    first_round_at_or_below(curves.sequential_feedback, level),
                    first_round_at_or_below(curves.random_samples, level)});
  }
  return rows;
}

std::vector<double> mean_curve(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) return {};
  std::vector<double> out(curves.front().size(), 0.0);
  for (const auto& c : curves) {
    if (c.size() != out.size()) throw ValidationError("mean curve: curves differ in length");
    for (std::size_t k = 0; k < c.size(); ++k) out[k] += c[k];
  }
  for (double& v : out) v /= static_cast<double>(curves.size());
  return out;
}

ReplayResult replay_archive(const nlohmann::json& archive) {
  check_envelope(archive, "session_archive");
  const Dataset data = dataset_from_json(archive.at("dataset"));
  std::optional<Dataset> holdout;
  if (!archive.at("holdout").is_null()) holdout = dataset_from_json(archive.at("holdout"));
  const Hyperparameters h = hyperparameters_from_json(archive.at("hyperparameters"));
  const EpConfig cfg = ep_config_from_json(archive.at("ep_config"));

  ReplayResult out;
  auto record = [&](const ElicitationState& s) {
    out.train_mse.push_back(mse(s.posterior, data));
    if (holdout) out.holdout_mse.push_back(mse(s.posterior, *holdout));
  };
  auto state = start_elicitation(data, h, cfg);
  record(state);
  for (const auto& entry : archive.at("transcript")) {
    state = advance_elicitation(state, data, feedback_from_json(entry), h, cfg);
    record(state);
  }
  return out;
}

nlohmann::json to_json(const StrategyRunResult& r) {
  json transcript = json::array();
  for (const auto& fb : r.transcript) transcript.push_back(elicit::to_json(fb));
  json fits = json::array();
  for (const auto& f : r.fits) fits.push_back(elicit::to_json(f));
  return json{{"format", "elicit.strategy_run"},
              {"version", kFormatVersion},
              {"strategy", r.strategy},
              {"test_mse", r.test_mse},
              {"train_mse", r.train_mse},
              {"relevant_queried", r.relevant_queried},
              {"transcript", transcript},
              {"round_seconds", r.round_seconds},
              {"fits", fits}};
}

StrategyRunResult strategy_run_from_json(const nlohmann::json& j) {
  check_envelope(j, "strategy_run");
  StrategyRunResult r;
  r.strategy = j.at("strategy").get<std::string>();
  r.test_mse = j.at("test_mse").get<std::vector<double>>();
  r.train_mse = j.at("train_mse").get<std::vector<double>>();
  r.relevant_queried = j.at("relevant_queried").get<std::vector<std::size_t>>();
  for (const auto& e : j.at("transcript")) r.transcript.push_back(feedback_from_json(e));
  r.round_seconds = j.at("round_seconds").get<std::vector<double>>();
  for (const auto& f : j.at("fits")) r.fits.push_back(fit_diagnostics_from_json(f));
  return r;
}

}  // namespace elicit
