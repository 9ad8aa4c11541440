#include "elicit/exact_oracle.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include "elicit/query_design.hpp"

namespace elicit {

ExactPosterior exact_posterior(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h) {
  const std::size_t m = data.m();
  if (m > kMaxExactFeatures) {
    throw ValidationError("exact posterior: m = " + std::to_string(m) + " exceeds " +
                          std::to_string(kMaxExactFeatures));
  }
  if (!h.fixed_sigma2) throw ValidationError("exact posterior: requires a fixed noise variance");
  if (log.num_features() != m) throw ValidationError("exact posterior: feedback log dimension mismatch");

  const double sigma2 = *h.fixed_sigma2;
  const double n = static_cast<double>(data.n());
  const Gram gram = compute_gram(data);
  const double two_pi = 2.0 * std::numbers::pi;

  VectorXd value_prec = VectorXd::Zero(static_cast<Eigen::Index>(m));
  VectorXd value_pmean = VectorXd::Zero(static_cast<Eigen::Index>(m));
  std::vector<int> relevance(m, -1);
  double value_const = 0.0;
  for (const auto& fb : log.entries()) {
    if (const auto* v = std::get_if<ValueAnswer>(&fb.answer)) {
      value_prec(static_cast<Eigen::Index>(fb.feature)) = 1.0 / h.omega2;
      value_pmean(static_cast<Eigen::Index>(fb.feature)) = v->value / h.omega2;
      value_const += -0.5 * std::log(two_pi * h.omega2) - 0.5 * v->value * v->value / h.omega2;
    } else if (const auto* r = std::get_if<RelevanceAnswer>(&fb.answer)) {
      relevance[fb.feature] = r->relevant ? 1 : 0;
    }
  }

  const std::size_t num_configs = std::size_t{1} << m;
  ExactPosterior out;
  out.component_weights.resize(static_cast<Eigen::Index>(num_configs));
  out.component_means.resize(num_configs);
  out.component_covs.resize(num_configs);
  out.component_log_evidence.resize(num_configs);

  const double base = -0.5 * n * std::log(two_pi * sigma2) - 0.5 * gram.yty / sigma2 + value_const;
  const double log_rho = std::log(h.rho);
  const double log_not_rho = std::log1p(-h.rho);

  for (std::size_t k = 0; k < num_configs; ++k) {
    std::vector<Eigen::Index> active;
    double log_prior = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const bool on = (k >> j) & 1U;
      if (on) active.push_back(static_cast<Eigen::Index>(j));
      log_prior += on ? log_rho : log_not_rho;
      if (relevance[j] >= 0) log_prior += std::log((relevance[j] == static_cast<int>(on)) ? h.pi : 1.0 - h.pi);
    }
    const auto s = static_cast<Eigen::Index>(active.size());
    MatrixXd a(s, s);
    VectorXd b(s);
    for (Eigen::Index p = 0; p < s; ++p) {
      b(p) = gram.xty(active[p]) / sigma2 + value_pmean(active[p]);
      for (Eigen::Index q = 0; q < s; ++q) a(p, q) = gram.xtx(active[p], active[q]) / sigma2;
      a(p, p) += 1.0 / h.psi2 + value_prec(active[p]);
    }
    double log_det = 0.0;
    VectorXd mean = VectorXd::Zero(s);
    MatrixXd cov = MatrixXd::Zero(s, s);
    if (s > 0) {
      Eigen::LLT<MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) throw NumericalError("exact posterior: component precision not PD");
      const MatrixXd l = llt.matrixL();
      log_det = 2.0 * l.diagonal().array().log().sum();
      mean = llt.solve(b);
      cov = llt.solve(MatrixXd::Identity(s, s));
    }
    const double log_evidence = base - 0.5 * static_cast<double>(s) * std::log(h.psi2) - 0.5 * log_det +
                                0.5 * b.dot(mean) + log_prior;
    out.component_log_evidence[k] = log_evidence;
    out.component_means[k] = std::move(mean);
    out.component_covs[k] = std::move(cov);
  }

  double max_log = -std::numeric_limits<double>::infinity();
  for (double v : out.component_log_evidence) max_log = std::max(max_log, v);
  double total = 0.0;
  for (std::size_t k = 0; k < num_configs; ++k) {
    const double w = std::exp(out.component_log_evidence[k] - max_log);
    out.component_weights(static_cast<Eigen::Index>(k)) = w;
    total += w;
  }
  out.component_weights /= total;

  const auto mm = static_cast<Eigen::Index>(m);
  out.marginal_mean = VectorXd::Zero(mm);
  out.marginal_cov = MatrixXd::Zero(mm, mm);
  out.inclusion_probs = VectorXd::Zero(mm);
  for (std::size_t k = 0; k < num_configs; ++k) {
    const double w = out.component_weights(static_cast<Eigen::Index>(k));
    if (w == 0.0) continue;
    VectorXd full_mean = VectorXd::Zero(mm);
    MatrixXd second = MatrixXd::Zero(mm, mm);
    std::vector<Eigen::Index> active;
    for (std::size_t j = 0; j < m; ++j) {
      if ((k >> j) & 1U) {
        active.push_back(static_cast<Eigen::Index>(j));
        out.inclusion_probs(static_cast<Eigen::Index>(j)) += w;
      }
    }
    const auto& mu = out.component_means[k];
    const auto& cov = out.component_covs[k];
    for (std::size_t p = 0; p < active.size(); ++p) {
      full_mean(active[p]) = mu(static_cast<Eigen::Index>(p));
      for (std::size_t q = 0; q < active.size(); ++q) {
        second(active[p], active[q]) = cov(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) +
                                       mu(static_cast<Eigen::Index>(p)) * mu(static_cast<Eigen::Index>(q));
      }
    }
    out.marginal_mean += w * full_mean;
    out.marginal_cov += w * second;
  }
  out.marginal_cov -= out.marginal_mean * out.marginal_mean.transpose();
  return out;
}

namespace {

// Summed KL over training rows between the predictive of `next` and `base`.
double summed_predictive_kl(const PosteriorApprox& next, const PosteriorApprox& base, const Dataset& data) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.x().rows(); ++i) {
    const VectorXd x = data.x().row(i).transpose();
    const auto p_new = posterior_predictive(next, x);
    const auto p_old = posterior_predictive(base, x);
    total += kl_predictive(p_new.mean, p_new.variance, p_old.mean, p_old.variance);
  }
  return total;
}

}  // namespace

double mc_expected_info_gain(const PosteriorApprox& base, const Dataset& data, const FeedbackLog& log,
                             const Hyperparameters& h, std::size_t j, QueryKind kind, const McGainOptions& opts) {
  if (opts.n_draws < 100) throw ValidationError("mc information gain: need at least 100 draws");
  if (j >= data.m()) throw ValidationError("mc information gain: feature index out of range");
  const auto jj = static_cast<Eigen::Index>(j);
  std::mt19937_64 rng(opts.seed);

  if (kind == QueryKind::Relevance) {
    // Only two outcomes: each branch posterior is computed once.
    std::map<int, double> branch_gain;
    auto branch = [&](bool relevant) {
      PosteriorApprox next;
      if (opts.refit == McRefit::FrozenSites) {
        next = apply_relevance_feedback_site(base, j, relevant, h, opts.ep);
      } else {
        next = fit_posterior(data, log.with(Feedback::relevance(j, relevant)), h, opts.ep, base.sites).posterior;
      }
      return summed_predictive_kl(next, base, data);
    };
    const double p1 = h.pi * base.rho_bar(jj) + (1.0 - h.pi) * (1.0 - base.rho_bar(jj));
    std::bernoulli_distribution coin(p1);
    double sum = 0.0;
    for (std::size_t d = 0; d < opts.n_draws; ++d) {
      const int f = coin(rng) ? 1 : 0;
      auto it = branch_gain.find(f);
      if (it == branch_gain.end()) it = branch_gain.emplace(f, branch(f == 1)).first;
      sum += it->second;
    }
    return sum / static_cast<double>(opts.n_draws);
  }

  std::normal_distribution<double> feedback(base.m_bar(jj), std::sqrt(base.sigma_bar(jj, jj) + h.omega2));
  double sum = 0.0;
  if (opts.refit == McRefit::FullRefit) {
    for (std::size_t d = 0; d < opts.n_draws; ++d) {
      const double f = feedback(rng);
      const auto next = fit_posterior(data, log.with(Feedback::value(j, f)), h, opts.ep, base.sites).posterior;
      sum += summed_predictive_kl(next, base, data);
    }
    return sum / static_cast<double>(opts.n_draws);
  }

  // Frozen sites: the new covariance comes from a dense reassembly and does
  // not depend on f; only the mean moves with each draw.
  SiteParams sites = base.sites;
  sites.value_tau(jj) += 1.0 / h.omega2;
  const PosteriorApprox anchored = assemble(sites, h);
  const VectorXd direction = anchored.sigma_bar.col(jj) / h.omega2;
  const VectorXd anchored_mean = anchored.m_bar;
  PosteriorApprox next = anchored;
  for (std::size_t d = 0; d < opts.n_draws; ++d) {
    const double f = feedback(rng);
    next.m_bar = anchored_mean + direction * f;
    sum += summed_predictive_kl(next, base, data);
  }
  return sum / static_cast<double>(opts.n_draws);
}

double mc_expected_info_gain(const Dataset& data, const FeedbackLog& log, const Hyperparameters& h, std::size_t j,
                             QueryKind kind, const McGainOptions& opts) {
  const auto base = fit_posterior(data, log, h, opts.ep).posterior;
  return mc_expected_info_gain(base, data, log, h, j, kind, opts);
}

}  // namespace elicit
