#pragma once

// Brute-force reference computations for small problems. Exponential in m;
// used by tests and the acceptance suite only.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "elicit/inference_ep.hpp"
#include "elicit/model.hpp"

namespace elicit {

inline constexpr std::size_t kMaxExactFeatures = 15;

/// Exact posterior as a mixture over all 2^m inclusion configurations.
/// Component k has gamma_j = bit j of k; its Gaussian lives on the active
/// coordinates in increasing index order.
struct ExactPosterior {
  VectorXd component_weights;
  std::vector<VectorXd> component_means;
  std::vector<MatrixXd> component_covs;
  std::vector<double> component_log_evidence;
  VectorXd marginal_mean;
  MatrixXd marginal_cov;
  VectorXd inclusion_probs;
};

/// Requires a fixed noise variance and m <= 15.
ExactPosterior exact_posterior(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h);

enum class McRefit {
  /// Add the hypothetical feedback site and reassemble densely; all other sites frozen.
  FrozenSites,
  /// Refit the whole approximation with the hypothetical feedback appended to the log.
  FullRefit,
};

struct McGainOptions {
  std::size_t n_draws = 100000;
  McRefit refit = McRefit::FrozenSites;
  std::uint64_t seed = 1;
  EpConfig ep;
};

/// Monte-Carlo estimate of the expected summed predictive KL over training
/// rows for a feedback on feature j, drawing feedbacks from their predictive
/// distribution under the fitted posterior. Refuses n_draws < 100.
double mc_expected_info_gain(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h, std::size_t j,
                             QueryKind kind, const McGainOptions& opts);

/// Same, against an already fitted base posterior.
double mc_expected_info_gain(const PosteriorApprox& base, const Dataset& data, const FeedbackLog& log,
                             const Hyperparameters& h, std::size_t j, QueryKind kind, const McGainOptions& opts);

}  // namespace elicit
