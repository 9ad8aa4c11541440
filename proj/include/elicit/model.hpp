#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace elicit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: bad configuration, malformed data, contract violation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown, e.g. loss of positive definiteness.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Regression problem: n samples, m features.
class Dataset {
 public:
  Dataset() = default;
  /// Throws ValidationError if shapes disagree, names repeat or an entry is non-finite.
  Dataset(MatrixXd x, VectorXd y, std::vector<std::string> feature_names);

  const MatrixXd& x() const { return x_; }
  const VectorXd& y() const { return y_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  std::size_t n() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(x_.cols()); }

  /// Rows selected by index, in the given order.
  Dataset rows(const std::vector<std::size_t>& idx) const;

 private:
  MatrixXd x_;
  VectorXd y_;
  std::vector<std::string> names_;
};

/// Default feature names f0, f1, ...
std::vector<std::string> default_feature_names(std::size_t m);

/// Fixed model constants. An empty `fixed_sigma2` means the noise precision
/// gets a Gamma(alpha_sigma, beta_sigma) prior and is learned.
struct Hyperparameters {
  double psi2 = 1.0;
  double rho = 0.5;
  double alpha_sigma = 1.0;
  double beta_sigma = 1.0;
  double omega2 = 0.01;
  double pi = 0.95;
  std::optional<double> fixed_sigma2 = 1.0;

  bool learned_noise() const { return !fixed_sigma2.has_value(); }
  bool operator==(const Hyperparameters&) const = default;
};

/// Returns `h` unchanged or throws ValidationError naming the offending field.
Hyperparameters validate_hyperparameters(const Hyperparameters& h);

struct ValueAnswer {
  double value = 0.0;
  bool operator==(const ValueAnswer&) const = default;
};
struct RelevanceAnswer {
  bool relevant = false;
  bool operator==(const RelevanceAnswer&) const = default;
};
/// The expert declined; consumes the query without adding evidence.
struct UncertainAnswer {
  bool operator==(const UncertainAnswer&) const = default;
};
using Answer = std::variant<ValueAnswer, RelevanceAnswer, UncertainAnswer>;

struct Feedback {
  std::size_t feature = 0;
  Answer answer;

  static Feedback value(std::size_t j, double f) { return {j, ValueAnswer{f}}; }
  static Feedback relevance(std::size_t j, bool relevant) { return {j, RelevanceAnswer{relevant}}; }
  static Feedback uncertain(std::size_t j) { return {j, UncertainAnswer{}}; }

  bool is_value() const { return std::holds_alternative<ValueAnswer>(answer); }
  bool is_relevance() const { return std::holds_alternative<RelevanceAnswer>(answer); }
  bool is_uncertain() const { return std::holds_alternative<UncertainAnswer>(answer); }
  bool operator==(const Feedback&) const = default;
};

/// What kind of question the query loop asks.
enum class QueryKind { Value, Relevance };

std::string to_string(QueryKind kind);
QueryKind parse_query_kind(const std::string& s);

/// Ordered feedback transcript plus the set of features already asked about.
class FeedbackLog {
 public:
  FeedbackLog() = default;
  explicit FeedbackLog(std::size_t num_features) : num_features_(num_features) {}

  /// Copy with `fb` appended. Throws on out-of-range index or a duplicate
  /// Value/Relevance entry for the same feature.
  FeedbackLog with(const Feedback& fb) const;

  const std::vector<Feedback>& entries() const { return entries_; }
  const std::set<std::size_t>& queried() const { return queried_; }
  bool was_queried(std::size_t j) const { return queried_.count(j) != 0; }
  std::size_t num_features() const { return num_features_; }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const FeedbackLog&) const = default;

 private:
  std::size_t num_features_ = 0;
  std::vector<Feedback> entries_;
  std::set<std::size_t> queried_;
};

FeedbackLog log_append(const FeedbackLog& log, const Feedback& fb);

/// Natural parameters of every site term of the factorized approximation.
/// Gaussian sites carry precision-adjusted means and precisions; Bernoulli
/// sites carry logits; the Gamma site carries (alpha, beta) increments.
struct SiteParams {
  VectorXd likelihood_mu;
  MatrixXd likelihood_gamma;
  double likelihood_alpha = 0.0;
  double likelihood_beta = 0.0;
  /// E[sigma^-2] that produced likelihood_mu / likelihood_gamma.
  double likelihood_scale = 0.0;
  VectorXd prior_mu;
  VectorXd prior_tau;
  VectorXd prior_rho;
  VectorXd relevance_rho;
  VectorXd value_mu;
  VectorXd value_tau;

  std::size_t m() const { return static_cast<std::size_t>(prior_tau.size()); }
};

/// q(w) q(sigma^-2) q(gamma) together with the sites it was assembled from.
struct PosteriorApprox {
  VectorXd m_bar;
  MatrixXd sigma_bar;
  VectorXd rho_bar;
  double alpha_bar = 1.0;
  double beta_bar = 1.0;
  SiteParams sites;

  std::size_t m() const { return static_cast<std::size_t>(m_bar.size()); }
  /// Point estimate of the residual variance, beta_bar / alpha_bar.
  double residual_variance() const { return beta_bar / alpha_bar; }
  /// Mean noise precision, alpha_bar / beta_bar.
  double noise_precision() const { return alpha_bar / beta_bar; }
};

/// Sufficient statistics of the data used by the likelihood site.
struct Gram {
  MatrixXd xtx;
  VectorXd xty;
  double yty = 0.0;
  std::size_t n = 0;
};

Gram compute_gram(const Dataset& data);

/// Sites of the feedback-free, data-free approximation: prior sites moment
/// matched to the spike-and-slab prior (mean 0, variance rho * psi2), zero
/// feedback sites, and a likelihood site at the prior noise precision.
SiteParams initial_sites(const Gram& gram, std::size_t m, const Hyperparameters& h);

/// Rebuilds the Gaussian likelihood site as scale * (X'X, X'y).
void set_likelihood_site(SiteParams& sites, const Gram& gram, double scale);

/// Rebuilds value/relevance feedback sites from the log (exact sites).
void install_feedback_sites(SiteParams& sites, const FeedbackLog& log, const Hyperparameters& h);

/// Combines site parameters into the full approximation. Throws
/// NumericalError when the precision matrix is not positive definite.
PosteriorApprox assemble(SiteParams sites, const Hyperparameters& h);

/// Ground truth of a synthetic problem.
struct GroundTruth {
  VectorXd w_true;
  std::vector<int> gamma_true;
  std::size_t m_star = 0;
};

double logit(double p);
double sigmoid(double x);
double log_sigmoid(double x);

namespace detail {
/// Number of dense m x m inversions performed so far (for cost assertions).
std::size_t dense_inversion_count();
}  // namespace detail

}  // namespace elicit
