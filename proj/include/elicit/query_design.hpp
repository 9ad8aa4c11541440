#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "elicit/inference_ep.hpp"
#include "elicit/model.hpp"

namespace elicit {

/// Expected information gain of every candidate plus the chosen one.
struct QueryRanking {
  /// One entry per feature; NaN for features already queried.
  std::vector<double> gains;
  std::vector<std::size_t> candidates;
  std::size_t selected = 0;
  QueryKind kind = QueryKind::Relevance;
};

/// Predictive distribution of a value feedback on feature j: N(m_j, Sigma_jj + omega2).
Prediction predictive_feedback_value(const PosteriorApprox& post, std::size_t j, const Hyperparameters& h);

/// Probability that a relevance feedback on feature j says "relevant".
double predictive_feedback_relevance(const PosteriorApprox& post, std::size_t j, const Hyperparameters& h);

/// KL( N(mean_new, var_new) || N(mean_old, var_old) ).
double kl_predictive(double mean_new, double var_new, double mean_old, double var_old);

struct RankOneResult {
  MatrixXd covariance;
  VectorXd mean;
};

/// Adds precision `t` and precision-adjusted mean `h_nat` at coordinate j via
/// the matrix inversion lemma. Throws if 1 + t * Sigma_jj <= 0.
RankOneResult rank_one_posterior(const MatrixXd& sigma, const VectorXd& mean, std::size_t j, double t,
                                 double h_nat);

/// Evaluates expected gains against a frozen posterior snapshot. Construction
/// costs O(n m^2); each candidate costs O(n) plus one column read.
class GainEvaluator {
 public:
  GainEvaluator(const PosteriorApprox& post, const Dataset& data, const Hyperparameters& h, const EpConfig& cfg = {});

  double value_gain(std::size_t j) const;
  double relevance_gain(std::size_t j) const;
  /// Summed predictive KL over training rows after adding (t, h_nat) at j.
  /// Returns nullopt when the update would break positive definiteness.
  std::optional<double> gain_for_site_change(std::size_t j, double t, double h_nat) const;

  /// Number of branches skipped because of a rank-one precondition failure.
  std::size_t skipped_branches() const { return skipped_; }

 private:
  const PosteriorApprox& post_;
  Hyperparameters h_;
  EpConfig cfg_;
  MatrixXd x_sigma_;       // X * Sigma, n x m
  VectorXd base_var_;      // x_i' Sigma x_i + s^2
  mutable std::size_t skipped_ = 0;
};

double expected_gain_value_feedback(const PosteriorApprox& post, const Dataset& data, std::size_t j,
                                    const Hyperparameters& h);

double expected_gain_relevance_feedback(const PosteriorApprox& post, const Dataset& data, std::size_t j,
                                        const Hyperparameters& h, const EpConfig& cfg = {});

/// Ranks every feature not yet in the log. Throws when none remain.
QueryRanking select_next_query(const PosteriorApprox& post, const Dataset& data, const FeedbackLog& log,
                               const Hyperparameters& h, QueryKind kind, const EpConfig& cfg = {});

/// All features ordered by gain against one fixed posterior (descending, index tie-break).
std::vector<std::size_t> nonsequential_ranking(const PosteriorApprox& post, const Dataset& data,
                                               const Hyperparameters& h, QueryKind kind, const EpConfig& cfg = {});

}  // namespace elicit
