#include "elicit/query_design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace elicit {

namespace {

constexpr double kGainClip = 1e-9;

double clip_gain(double g) { return (g < 0 && g >= -kGainClip) ? 0.0 : g; }

void check_index(std::size_t j, std::size_t m) {
  if (j >= m) throw ValidationError("query: feature index " + std::to_string(j) + " out of range");
}

}  // namespace

Prediction predictive_feedback_value(const PosteriorApprox& post, std::size_t j, const Hyperparameters& h) {
  check_index(j, post.m());
  const auto jj = static_cast<Eigen::Index>(j);
  return {post.m_bar(jj), post.sigma_bar(jj, jj) + h.omega2};
}

double predictive_feedback_relevance(const PosteriorApprox& post, std::size_t j, const Hyperparameters& h) {
  check_index(j, post.m());
  const double r = post.rho_bar(static_cast<Eigen::Index>(j));
  return h.pi * r + (1.0 - h.pi) * (1.0 - r);
}

double kl_predictive(double mean_new, double var_new, double mean_old, double var_old) {
  if (!(var_new > 0) || !(var_old > 0)) throw NumericalError("predictive KL: variances must be > 0");
  const double d = mean_new - mean_old;
  return 0.5 * (std::log(var_old / var_new) + (var_new + d * d) / var_old - 1.0);
}

RankOneResult rank_one_posterior(const MatrixXd& sigma, const VectorXd& mean, std::size_t j, double t,
                                 double h_nat) {
  check_index(j, static_cast<std::size_t>(mean.size()));
  const auto jj = static_cast<Eigen::Index>(j);
  const double s_jj = sigma(jj, jj);
  const double denom = 1.0 + t * s_jj;
  if (!(denom > 0)) throw NumericalError("rank-one update would destroy positive definiteness");
  RankOneResult out;
  if (t == 0.0) {
    out.covariance = sigma;
  } else {
    const VectorXd col = sigma.col(jj);
    out.covariance = sigma - (t / denom) * col * col.transpose();
  }
  out.mean = mean + sigma.col(jj) * ((h_nat - t * mean(jj)) / denom);
  return out;
}

GainEvaluator::GainEvaluator(const PosteriorApprox& post, const Dataset& data, const Hyperparameters& h,
                             const EpConfig& cfg)
    : post_(post), h_(h), cfg_(cfg) {
  if (data.m() != post.m()) throw ValidationError("gain evaluator: dataset and posterior dimensions differ");
  x_sigma_ = data.x() * post.sigma_bar;
  base_var_ = x_sigma_.cwiseProduct(data.x()).rowwise().sum().array() + post.residual_variance();
}

std::optional<double> GainEvaluator::gain_for_site_change(std::size_t j, double t, double h_nat) const {
  const auto jj = static_cast<Eigen::Index>(j);
  if (t == 0.0 && h_nat == 0.0) return 0.0;
  const double s_jj = post_.sigma_bar(jj, jj);
  const double denom = 1.0 + t * s_jj;
  if (!(denom > 0)) return std::nullopt;
  const double mean_shift = (h_nat - t * post_.m_bar(jj)) / denom;
  double total = 0.0;
  for (Eigen::Index i = 0; i < x_sigma_.rows(); ++i) {
    const double c = x_sigma_(i, jj);
    const double v = base_var_(i);
    const double v_new = v - t * c * c / denom;
    if (!(v_new > 0)) return std::nullopt;
    const double d = c * mean_shift;
    total += 0.5 * (std::log(v / v_new) + (v_new + d * d) / v - 1.0);
  }
  return total;
}

double GainEvaluator::value_gain(std::size_t j) const {
  check_index(j, post_.m());
  const auto jj = static_cast<Eigen::Index>(j);
  const double t = 1.0 / h_.omega2;
  if (t == 0.0) return 0.0;
  const double s_jj = post_.sigma_bar(jj, jj);
  const double denom = 1.0 + t * s_jj;
  if (!(denom > 0)) {
    ++skipped_;
    return 0.0;
  }
  // E_f[(x' m_f - x' m)^2] = (t c / denom)^2 (Sigma_jj + omega2); the variance
  // part does not depend on the feedback value.
  const double feedback_var = s_jj + h_.omega2;
  const double shift_scale = t / denom;
  double total = 0.0;
  for (Eigen::Index i = 0; i < x_sigma_.rows(); ++i) {
    const double c = x_sigma_(i, jj);
    const double v = base_var_(i);
    const double v_new = v - t * c * c / denom;
    const double expected_sq_shift = shift_scale * shift_scale * c * c * feedback_var;
    total += 0.5 * (std::log(v / v_new) + (v_new + expected_sq_shift) / v - 1.0);
  }
  return clip_gain(total);
}

double GainEvaluator::relevance_gain(std::size_t j) const {
  check_index(j, post_.m());
  const auto jj = static_cast<Eigen::Index>(j);
  const auto& s = post_.sites;
  const double lpi = logit(h_.pi);
  const double p_relevant = predictive_feedback_relevance(post_, j, h_);
  double expected = 0.0;
  for (int f = 0; f <= 1; ++f) {
    const double prob = f == 1 ? p_relevant : 1.0 - p_relevant;
    if (prob == 0.0) continue;
    const double cavity_logit = logit(h_.rho) + s.relevance_rho(jj) + (f == 1 ? lpi : -lpi);
    const auto r = refresh_prior_site(post_.m_bar(jj), post_.sigma_bar(jj, jj), s.prior_tau(jj), s.prior_mu(jj),
                                      cavity_logit, h_.psi2, cfg_.min_site_variance);
    if (!r.updated) continue;
    const auto g = gain_for_site_change(j, r.tau - s.prior_tau(jj), r.mu - s.prior_mu(jj));
    if (!g) {
      ++skipped_;
      continue;
    }
    expected += prob * *g;
  }
  return clip_gain(expected);
}

double expected_gain_value_feedback(const PosteriorApprox& post, const Dataset& data, std::size_t j,
                                    const Hyperparameters& h) {
  return GainEvaluator(post, data, h).value_gain(j);
}

double expected_gain_relevance_feedback(const PosteriorApprox& post, const Dataset& data, std::size_t j,
                                        const Hyperparameters& h, const EpConfig& cfg) {
  return GainEvaluator(post, data, h, cfg).relevance_gain(j);
}

QueryRanking select_next_query(const PosteriorApprox& post, const Dataset& data, const FeedbackLog& log,
                               const Hyperparameters& h, QueryKind kind, const EpConfig& cfg) {
  QueryRanking ranking;
  ranking.kind = kind;
  ranking.gains.assign(post.m(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t j = 0; j < post.m(); ++j) {
    if (!log.was_queried(j)) ranking.candidates.push_back(j);
  }
  if (ranking.candidates.empty()) throw ValidationError("select query: no candidate features remain");

  const GainEvaluator eval(post, data, h, cfg);
  double best = -std::numeric_limits<double>::infinity();
  for (const std::size_t j : ranking.candidates) {
    const double g = kind == QueryKind::Value ? eval.value_gain(j) : eval.relevance_gain(j);
    ranking.gains[j] = g;
    if (g > best) {
      best = g;
      ranking.selected = j;
    }
  }
  return ranking;
}

std::vector<std::size_t> nonsequential_ranking(const PosteriorApprox& post, const Dataset& data,
                                               const Hyperparameters& h, QueryKind kind, const EpConfig& cfg) {
  const GainEvaluator eval(post, data, h, cfg);
  std::vector<double> gains(post.m());
  for (std::size_t j = 0; j < post.m(); ++j) {
    gains[j] = kind == QueryKind::Value ? eval.value_gain(j) : eval.relevance_gain(j);
  }
  std::vector<std::size_t> order(post.m());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
  return order;
}

}  // namespace elicit
