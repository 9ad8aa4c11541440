#include "elicit/inference_ep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace elicit {

namespace {

constexpr int kMaxDampingHalvings = 10;

void check_index(std::size_t j, std::size_t m, const char* where) {
  if (j >= m) {
    throw ValidationError(std::string(where) + ": feature index " + std::to_string(j) + " out of range [0, " +
                          std::to_string(m) + ")");
  }
}

double max_abs_diff(const VectorXd& a, const VectorXd& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

// Prior-site refresh at a single coordinate followed by reassembly.
PosteriorApprox refresh_single(PosteriorApprox post, std::size_t j, const Hyperparameters& h,
                               const EpConfig& cfg) {
  const auto jj = static_cast<Eigen::Index>(j);
  auto& s = post.sites;
  const auto r = refresh_prior_site(post.m_bar(jj), post.sigma_bar(jj, jj), s.prior_tau(jj), s.prior_mu(jj),
                                    logit(h.rho) + s.relevance_rho(jj), h.psi2, cfg.min_site_variance);
  if (r.updated) {
    s.prior_tau(jj) = r.tau;
    s.prior_mu(jj) = r.mu;
    s.prior_rho(jj) = r.rho;
  }
  return assemble(std::move(post.sites), h);
}

}  // namespace

EpConfig validate_ep_config(const EpConfig& cfg) {
  if (!(cfg.damping > 0 && cfg.damping <= 1)) throw ValidationError("ep config: damping must lie in (0, 1]");
  if (cfg.max_iters <= 0) throw ValidationError("ep config: max_iters must be positive");
  if (!(cfg.tol > 0)) throw ValidationError("ep config: tol must be > 0");
  if (!(cfg.min_site_variance > 0)) throw ValidationError("ep config: min_site_variance must be > 0");
  return cfg;
}

TiltedMoments spike_slab_tilted_moments(double cavity_mean, double cavity_var, double cavity_logit_rho,
                                        double psi2) {
  if (!std::isfinite(cavity_mean) || !std::isfinite(cavity_var) || !std::isfinite(psi2) ||
      std::isnan(cavity_logit_rho)) {
    throw NumericalError("tilted moments: non-finite input");
  }
  if (!(cavity_var > 0)) throw NumericalError("tilted moments: cavity variance must be > 0");
  if (psi2 < 0) throw NumericalError("tilted moments: slab variance must be >= 0");

  const double total = cavity_var + psi2;
  TiltedMoments t;
  // log N(m | 0, v + psi2) - log N(m | 0, v)
  t.z_ratio_log = -0.5 * std::log1p(psi2 / cavity_var) +
                  0.5 * cavity_mean * cavity_mean * psi2 / (cavity_var * total);
  t.p_slab = sigmoid(cavity_logit_rho + t.z_ratio_log);
  const double slab_mean = cavity_mean * psi2 / total;
  const double slab_var = cavity_var * psi2 / total;
  t.mean = t.p_slab * slab_mean;
  t.var = t.p_slab * slab_var + t.p_slab * (1.0 - t.p_slab) * slab_mean * slab_mean;
  return t;
}

PriorSiteUpdate refresh_prior_site(double marginal_mean, double marginal_var, double site_tau, double site_mu,
                                   double cavity_logit_rho, double psi2, double min_site_variance) {
  PriorSiteUpdate out;
  const double cavity_prec = 1.0 / marginal_var - site_tau;
  if (!(cavity_prec > 0) || !std::isfinite(cavity_prec)) return out;
  const double cavity_var = 1.0 / cavity_prec;
  const double cavity_mean = cavity_var * (marginal_mean / marginal_var - site_mu);

  const auto t = spike_slab_tilted_moments(cavity_mean, cavity_var, cavity_logit_rho, psi2);
  const double max_prec = 1.0 / min_site_variance;
  double tau = t.var > 0 ? 1.0 / t.var - cavity_prec : max_prec;
  tau = std::min(tau, max_prec);
  out.updated = true;
  out.tau = tau;
  // Chosen so the new marginal mean equals the tilted mean even when tau is capped.
  out.mu = t.mean * (cavity_prec + tau) - cavity_mean * cavity_prec;
  out.rho = t.z_ratio_log;
  return out;
}

PosteriorApprox update_prior_sites(const PosteriorApprox& post, const Hyperparameters& h, const EpConfig& cfg,
                                   int* pd_retries) {
  const auto m = static_cast<Eigen::Index>(post.m());
  const auto& old = post.sites;
  VectorXd new_tau = old.prior_tau;
  VectorXd new_mu = old.prior_mu;
  VectorXd new_rho = old.prior_rho;
  const double prior_logit = logit(h.rho);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto r = refresh_prior_site(post.m_bar(j), post.sigma_bar(j, j), old.prior_tau(j), old.prior_mu(j),
                                      prior_logit + old.relevance_rho(j), h.psi2, cfg.min_site_variance);
    if (!r.updated) continue;  // improper cavity: keep the old site this sweep
    new_tau(j) = r.tau;
    new_mu(j) = r.mu;
    new_rho(j) = r.rho;
  }

  double d = cfg.damping;
  for (int attempt = 0;; ++attempt) {
    SiteParams sites = old;
    sites.prior_tau = d * new_tau + (1.0 - d) * old.prior_tau;
    sites.prior_mu = d * new_mu + (1.0 - d) * old.prior_mu;
    sites.prior_rho = d * new_rho + (1.0 - d) * old.prior_rho;
    try {
      return assemble(std::move(sites), h);
    } catch (const NumericalError&) {
      if (attempt >= kMaxDampingHalvings) {
        throw NumericalError("prior site update: covariance not positive definite after " +
                             std::to_string(kMaxDampingHalvings) + " damping halvings");
      }
      if (pd_retries) ++*pd_retries;
      d *= 0.5;
    }
  }
}

PosteriorApprox update_likelihood_vb(const PosteriorApprox& post, const Gram& gram, const Hyperparameters& h) {
  if (!h.learned_noise()) return post;
  const VectorXd& mean = post.m_bar;
  double residual = gram.yty - 2.0 * mean.dot(gram.xty) + mean.dot(gram.xtx * mean);
  residual = std::max(residual, 0.0);
  const double trace_term = gram.xtx.cwiseProduct(post.sigma_bar).sum();

  SiteParams sites = post.sites;
  sites.likelihood_alpha = 0.5 * static_cast<double>(gram.n);
  sites.likelihood_beta = -0.5 * (residual + trace_term);
  const double alpha_bar = h.alpha_sigma + sites.likelihood_alpha;
  const double beta_bar = h.beta_sigma - sites.likelihood_beta;
  if (!(beta_bar > 0) || !std::isfinite(beta_bar)) {
    throw NumericalError("likelihood VB update: non-positive Gamma rate");
  }
  set_likelihood_site(sites, gram, alpha_bar / beta_bar);
  return assemble(std::move(sites), h);
}

PosteriorApprox update_likelihood_vb(const PosteriorApprox& post, const Dataset& data, const Hyperparameters& h) {
  if (!h.learned_noise()) return post;
  return update_likelihood_vb(post, compute_gram(data), h);
}

PosteriorApprox apply_relevance_feedback_site(const PosteriorApprox& post, std::size_t j, bool relevant,
                                              const Hyperparameters& h, const EpConfig& cfg) {
  check_index(j, post.m(), "relevance feedback");
  const auto jj = static_cast<Eigen::Index>(j);
  if (post.sites.relevance_rho(jj) != 0.0) {
    throw ValidationError("relevance feedback: feature " + std::to_string(j) + " already has a relevance site");
  }
  PosteriorApprox next = post;
  const double lpi = logit(h.pi);
  next.sites.relevance_rho(jj) = relevant ? lpi : -lpi;
  return refresh_single(std::move(next), j, h, cfg);
}

PosteriorApprox apply_value_feedback_site(const PosteriorApprox& post, std::size_t j, double value,
                                          const Hyperparameters& h, const EpConfig& cfg) {
  check_index(j, post.m(), "value feedback");
  if (!std::isfinite(value)) throw ValidationError("value feedback: value must be finite");
  const auto jj = static_cast<Eigen::Index>(j);
  if (post.sites.value_tau(jj) != 0.0) {
    throw ValidationError("value feedback: feature " + std::to_string(j) + " already has a value site");
  }
  SiteParams sites = post.sites;
  sites.value_tau(jj) = 1.0 / h.omega2;
  sites.value_mu(jj) = value / h.omega2;
  return refresh_single(assemble(std::move(sites), h), j, h, cfg);
}

PosteriorApprox prior_posterior(std::size_t m, const Hyperparameters& h) {
  Gram empty;
  empty.xtx = MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  empty.xty = VectorXd::Zero(static_cast<Eigen::Index>(m));
  return assemble(initial_sites(empty, m, h), h);
}

namespace {

FitResult run_sweeps(PosteriorApprox post, const Gram& gram, const Hyperparameters& h, const EpConfig& cfg) {
  FitResult result;
  auto& diag = result.diagnostics;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const VectorXd prev_mean = post.m_bar;
    const VectorXd prev_rho = post.rho_bar;
    post = update_prior_sites(post, h, cfg, &diag.pd_retries);
    post = update_likelihood_vb(post, gram, h);
    diag.sweeps = it + 1;
    diag.final_delta_mean = max_abs_diff(post.m_bar, prev_mean);
    diag.final_delta_rho = max_abs_diff(post.rho_bar, prev_rho);
    if (diag.final_delta_mean < cfg.tol && diag.final_delta_rho < cfg.tol) {
      diag.converged = true;
      break;
    }
  }
  result.posterior = std::move(post);
  return result;
}

void check_fit_inputs(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h, const EpConfig& cfg) {
  validate_hyperparameters(h);
  validate_ep_config(cfg);
  if (log.num_features() != data.m()) {
    throw ValidationError("fit: feedback log is for " + std::to_string(log.num_features()) +
                          " features but the dataset has " + std::to_string(data.m()));
  }
}

}  // namespace

FitResult fit_posterior(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h,
                        const EpConfig& cfg) {
  check_fit_inputs(data, log, h, cfg);
  const Gram gram = compute_gram(data);
  SiteParams sites = initial_sites(gram, data.m(), h);
  install_feedback_sites(sites, log, h);
  return run_sweeps(assemble(std::move(sites), h), gram, h, cfg);
}

FitResult fit_posterior(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h, const EpConfig& cfg,
                        const SiteParams& warm) {
  check_fit_inputs(data, log, h, cfg);
  if (warm.m() != data.m()) throw ValidationError("fit: warm-start sites have the wrong dimension");
  const Gram gram = compute_gram(data);
  SiteParams sites = warm;
  set_likelihood_site(sites, gram, h.fixed_sigma2 ? 1.0 / *h.fixed_sigma2 : warm.likelihood_scale);
  install_feedback_sites(sites, log, h);
  PosteriorApprox start;
  try {
    start = assemble(std::move(sites), h);
  } catch (const NumericalError&) {
    return fit_posterior(data, log, h, cfg);
  }
  return run_sweeps(std::move(start), gram, h, cfg);
}

Prediction posterior_predictive(const PosteriorApprox& post, const VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != post.m()) {
    throw ValidationError("posterior predictive: x has " + std::to_string(x.size()) + " entries, expected " +
                          std::to_string(post.m()));
  }
  return {x.dot(post.m_bar), x.dot(post.sigma_bar * x) + post.residual_variance()};
}

ElicitationState start_elicitation(const Dataset& data, const Hyperparameters& h, const EpConfig& cfg) {
  ElicitationState state;
  state.log = FeedbackLog(data.m());
  auto fit = fit_posterior(data, state.log, h, cfg);
  state.posterior = std::move(fit.posterior);
  state.last_fit = fit.diagnostics;
  return state;
}

ElicitationState advance_elicitation(const ElicitationState& state, const Dataset& data, const Feedback& fb,
                                     const Hyperparameters& h, const EpConfig& cfg) {
  ElicitationState next;
  next.log = state.log.with(fb);
  if (fb.is_uncertain()) {
    next.posterior = state.posterior;
    next.last_fit = FitDiagnostics{0, 0.0, 0.0, 0, true};
    return next;
  }
  auto fit = fit_posterior(data, next.log, h, cfg, state.posterior.sites);
  next.posterior = std::move(fit.posterior);
  next.last_fit = fit.diagnostics;
  return next;
}

}  // namespace elicit
