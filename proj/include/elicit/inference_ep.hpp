#pragma once

#include <cstddef>

#include "elicit/model.hpp"

namespace elicit {

/// Knobs of the EP/VB fixed-point iteration.
struct EpConfig {
  /// Weight on the new site parameters in the convex combination with the old ones.
  double damping = 0.8;
  int max_iters = 500;
  /// Convergence threshold on max |change| of m_bar and rho_bar per sweep.
  double tol = 1e-6;
  /// Lower bound on the variance implied by a prior site (caps its precision).
  double min_site_variance = 1e-10;

  bool operator==(const EpConfig&) const = default;
};

EpConfig validate_ep_config(const EpConfig& cfg);

/// Moments of the tilted distribution cavity(w, gamma) * p(w | gamma).
struct TiltedMoments {
  double z_ratio_log = 0.0;  ///< log Z_slab - log Z_spike
  double mean = 0.0;
  double var = 0.0;
  double p_slab = 0.0;
};

/// Moments of N(w | cavity_mean, cavity_var) * Bern(gamma | sigmoid(cavity_logit_rho))
/// * [gamma N(w | 0, psi2) + (1 - gamma) delta_0(w)].
TiltedMoments spike_slab_tilted_moments(double cavity_mean, double cavity_var, double cavity_logit_rho,
                                        double psi2);

struct PriorSiteUpdate {
  bool updated = false;  ///< false when the cavity was improper and the site kept
  double tau = 0.0;
  double mu = 0.0;
  double rho = 0.0;
};

/// Undamped EP update of the prior site at coordinate j given the marginal
/// q(w_j) = N(mean, var) and the gamma cavity logit.
PriorSiteUpdate refresh_prior_site(double marginal_mean, double marginal_var, double site_tau, double site_mu,
                                   double cavity_logit_rho, double psi2, double min_site_variance);

/// One parallel EP sweep over all prior sites, damped. Halves the damping up
/// to 10 times if the assembled covariance loses positive definiteness.
PosteriorApprox update_prior_sites(const PosteriorApprox& post, const Hyperparameters& h, const EpConfig& cfg,
                                   int* pd_retries = nullptr);

/// VB update of the Gaussian and Gamma likelihood sites. No-op in fixed-noise mode.
PosteriorApprox update_likelihood_vb(const PosteriorApprox& post, const Dataset& data, const Hyperparameters& h);
PosteriorApprox update_likelihood_vb(const PosteriorApprox& post, const Gram& gram, const Hyperparameters& h);

/// Installs the exact relevance site at j, then refreshes the prior site at j once.
PosteriorApprox apply_relevance_feedback_site(const PosteriorApprox& post, std::size_t j, bool relevant,
                                              const Hyperparameters& h, const EpConfig& cfg);

/// Installs the exact Gaussian value site at j, then refreshes the prior site at j once.
PosteriorApprox apply_value_feedback_site(const PosteriorApprox& post, std::size_t j, double value,
                                          const Hyperparameters& h, const EpConfig& cfg = {});

struct FitDiagnostics {
  int sweeps = 0;
  double final_delta_mean = 0.0;
  double final_delta_rho = 0.0;
  int pd_retries = 0;
  bool converged = false;
};

struct FitResult {
  PosteriorApprox posterior;
  FitDiagnostics diagnostics;
};

/// Posterior with no data and no feedback.
PosteriorApprox prior_posterior(std::size_t m, const Hyperparameters& h);

/// Cold fit: sites start from the prior, feedback sites come from the log.
FitResult fit_posterior(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h,
                        const EpConfig& cfg);

/// Warm fit: starts from `warm` (typically the previous converged sites) with
/// the likelihood and feedback sites rebuilt from `data` and `log`.
FitResult fit_posterior(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h, const EpConfig& cfg,
                        const SiteParams& warm);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Gaussian posterior predictive of y at x.
Prediction posterior_predictive(const PosteriorApprox& post, const VectorXd& x);

/// State of one elicitation loop: transcript and current posterior.
struct ElicitationState {
  FeedbackLog log;
  PosteriorApprox posterior;
  FitDiagnostics last_fit;
};

/// Feedback-free fit that opens an elicitation loop.
ElicitationState start_elicitation(const Dataset& data, const Hyperparameters& h, const EpConfig& cfg);

/// Appends `fb` and refits warm-started from the current sites. An Uncertain
/// answer only retires the feature; the posterior is kept as is.
ElicitationState advance_elicitation(const ElicitationState& state, const Dataset& data, const Feedback& fb,
                                     const Hyperparameters& h, const EpConfig& cfg);

}  // namespace elicit
