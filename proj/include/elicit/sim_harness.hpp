#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "elicit/inference_ep.hpp"
#include "elicit/model.hpp"

namespace elicit {

struct SyntheticSpec {
  std::size_t n = 10;
  std::size_t m = 12;
  std::size_t m_star = 10;
  double psi2 = 1.0;
  double sigma2 = 1.0;
  std::uint64_t seed = 1;
  std::size_t n_test = 1000;
  /// Extra rows from the same model, for the feedbacks-vs-samples comparison.
  std::size_t n_pool = 0;
};

struct SyntheticProblem {
  Dataset train;
  Dataset test;
  Dataset pool;
  GroundTruth truth;
};

SyntheticProblem generate_synthetic(const SyntheticSpec& spec);

/// Answers value questions with draws from N(w_true_j, omega^2).
struct ValueOracle {
  VectorXd w_true;
  double omega = 0.1;
  std::uint64_t seed = 1;
};

/// Answers relevance questions correctly with probability pi.
struct RelevanceOracle {
  std::vector<int> gamma_true;
  double pi = 0.95;
  std::uint64_t seed = 1;
};

/// Thresholds inclusion probabilities learned from held-back user data.
struct DataDrivenRelevance {
  VectorXd inclusion_probs;
  double pi = 0.9;
};

using SimulatedUser = std::variant<ValueOracle, RelevanceOracle, DataDrivenRelevance>;

QueryKind query_kind_for(const SimulatedUser& user);

/// Each (seed, feature, draw) triple maps to its own random stream, so a
/// feature gets the same answer whichever round it is asked in.
Feedback simulated_value_feedback(const ValueOracle& user, std::size_t j, std::uint64_t draw = 0);
Feedback simulated_relevance_feedback(const RelevanceOracle& user, std::size_t j, std::uint64_t draw = 0);
Feedback data_driven_relevance_feedback(const DataDrivenRelevance& user, std::size_t j);
Feedback ask(const SimulatedUser& user, std::size_t j);

struct UserModelFit {
  DataDrivenRelevance user;
  FitDiagnostics diagnostics;
};

/// Fits the model on the user-data partition alone and keeps its inclusion probabilities.
UserModelFit build_data_driven_user(const Dataset& user_data, const Hyperparameters& h, const EpConfig& cfg = {});

enum class Strategy { Random, Sequential, NonSequential, OracleFirst };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

/// Training/test data plus the features treated as truly relevant (used by
/// OracleFirst and for counting relevant queries).
struct ElicitationProblem {
  Dataset train;
  Dataset test;
  std::vector<bool> relevant;
};

struct StrategyRunResult {
  std::string strategy;
  /// Index 0 is the feedback-free fit; entry k follows the k-th feedback.
  std::vector<double> test_mse;
  std::vector<double> train_mse;
  std::vector<std::size_t> relevant_queried;
  std::vector<Feedback> transcript;
  std::vector<double> round_seconds;
  std::vector<FitDiagnostics> fits;
};

StrategyRunResult run_strategy(Strategy strategy, const ElicitationProblem& problem, const SimulatedUser& user,
                               const Hyperparameters& h, const EpConfig& cfg, std::size_t rounds,
                               std::uint64_t seed);

/// Mean squared error of the posterior-mean predictions. Throws on empty data.
double mse(const PosteriorApprox& post, const Dataset& data);

/// Rounds-to-level table for one comparison. `std::nullopt` means the level
/// was not reached within the cap.
struct LevelRow {
  double level = 0.0;
  std::optional<std::size_t> random_feedback;
  std::optional<std::size_t> sequential_feedback;
  std::optional<std::size_t> random_samples;
};

struct FeedbackVsSamplesCurves {
  std::vector<double> random_feedback;
  std::vector<double> sequential_feedback;
  std::vector<double> random_samples;
};

/// Test-MSE curves for one run: random and sequential feedback on `train`,
/// and randomly added rows from `pool`, each over `cap` rounds.
FeedbackVsSamplesCurves feedbacks_vs_samples_curves(const Dataset& pool, const ElicitationProblem& problem,
                                                    const SimulatedUser& user, const Hyperparameters& h,
                                                    const EpConfig& cfg, std::size_t cap, std::uint64_t seed);

/// First round at which each curve is at or below each level.
std::vector<LevelRow> rounds_to_levels(const FeedbackVsSamplesCurves& curves, const std::vector<double>& levels);

std::optional<std::size_t> first_round_at_or_below(const std::vector<double>& curve, double level);

/// Element-wise mean of equally long curves.
std::vector<double> mean_curve(const std::vector<std::vector<double>>& curves);

/// Replays an exported session archive and returns the reproduced history
/// (train and holdout MSE per round; holdout empty if absent).
struct ReplayResult {
  std::vector<double> train_mse;
  std::vector<double> holdout_mse;
};

ReplayResult replay_archive(const nlohmann::json& archive);

nlohmann::json to_json(const StrategyRunResult& r);
StrategyRunResult strategy_run_from_json(const nlohmann::json& j);

}  // namespace elicit
