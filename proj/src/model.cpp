#include "elicit/model.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace elicit {

namespace {

std::atomic<std::size_t> g_dense_inversions{0};

bool all_finite(const MatrixXd& a) { return a.allFinite(); }

}  // namespace

namespace detail {
std::size_t dense_inversion_count() { return g_dense_inversions.load(); }
}  // namespace detail

Dataset::Dataset(MatrixXd x, VectorXd y, std::vector<std::string> feature_names)
    : x_(std::move(x)), y_(std::move(y)), names_(std::move(feature_names)) {
  if (y_.size() != x_.rows()) {
    throw ValidationError("dataset: y has " + std::to_string(y_.size()) + " entries but X has " +
                          std::to_string(x_.rows()) + " rows");
  }
  if (names_.size() != static_cast<std::size_t>(x_.cols())) {
    throw ValidationError("dataset: " + std::to_string(names_.size()) + " feature names for " +
                          std::to_string(x_.cols()) + " columns");
  }
  std::unordered_set<std::string> seen;
  for (const auto& name : names_) {
    if (!seen.insert(name).second) throw ValidationError("dataset: duplicate feature name '" + name + "'");
  }
  if (!all_finite(x_) || !y_.allFinite()) throw ValidationError("dataset: non-finite entry");
}

Dataset Dataset::rows(const std::vector<std::size_t>& idx) const {
  MatrixXd x(static_cast<Eigen::Index>(idx.size()), x_.cols());
  VectorXd y(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n()) throw ValidationError("dataset: row index out of range");
    x.row(static_cast<Eigen::Index>(r)) = x_.row(static_cast<Eigen::Index>(idx[r]));
    y(static_cast<Eigen::Index>(r)) = y_(static_cast<Eigen::Index>(idx[r]));
  }
  return Dataset(std::move(x), std::move(y), names_);
}

std::vector<std::string> default_feature_names(std::size_t m) {
  std::vector<std::string> names;
  names.reserve(m);
  for (std::size_t j = 0; j < m; ++j) names.push_back("f" + std::to_string(j));
  return names;
}

Hyperparameters validate_hyperparameters(const Hyperparameters& h) {
  auto require = [](bool ok, const char* field, const std::string& what) {
    if (!ok) throw ValidationError(std::string("hyperparameters: ") + field + " " + what);
  };
  require(std::isfinite(h.psi2) && h.psi2 > 0, "psi2", "must be finite and > 0");
  // rho = 1 is allowed: a pure slab (ridge) prior.
  require(h.rho > 0 && h.rho <= 1, "rho", "must lie in (0, 1]");
  require(std::isfinite(h.alpha_sigma) && h.alpha_sigma > 0, "alpha_sigma", "must be finite and > 0");
  require(std::isfinite(h.beta_sigma) && h.beta_sigma > 0, "beta_sigma", "must be finite and > 0");
  require(h.omega2 > 0 && !std::isnan(h.omega2), "omega2", "must be > 0");
  require(h.pi > 0.5 && h.pi < 1, "pi", "must lie in (0.5, 1)");
  if (h.fixed_sigma2) {
    require(std::isfinite(*h.fixed_sigma2) && *h.fixed_sigma2 > 0, "sigma2", "must be finite and > 0");
  }
  return h;
}

std::string to_string(QueryKind kind) { return kind == QueryKind::Value ? "value" : "relevance"; }

QueryKind parse_query_kind(const std::string& s) {
  if (s == "value") return QueryKind::Value;
  if (s == "relevance") return QueryKind::Relevance;
  throw ValidationError("unknown feedback kind '" + s + "' (expected value or relevance)");
}

FeedbackLog FeedbackLog::with(const Feedback& fb) const {
  if (fb.feature >= num_features_) {
    throw ValidationError("feedback: feature index " + std::to_string(fb.feature) + " out of range [0, " +
                          std::to_string(num_features_) + ")");
  }
  if (const auto* v = std::get_if<ValueAnswer>(&fb.answer); v && !std::isfinite(v->value)) {
    throw ValidationError("feedback: value feedback must be finite");
  }
  for (const auto& e : entries_) {
    if (e.feature != fb.feature) continue;
    if (e.is_value() && fb.is_value()) {
      throw ValidationError("feedback: duplicate value feedback on feature " + std::to_string(fb.feature));
    }
    if (e.is_relevance() && fb.is_relevance()) {
      throw ValidationError("feedback: duplicate relevance feedback on feature " + std::to_string(fb.feature));
    }
  }
  FeedbackLog out = *this;
  out.entries_.push_back(fb);
  out.queried_.insert(fb.feature);
  return out;
}

FeedbackLog log_append(const FeedbackLog& log, const Feedback& fb) { return log.with(fb); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Gram compute_gram(const Dataset& data) {
  Gram g;
  g.xtx = MatrixXd::Zero(static_cast<Eigen::Index>(data.m()), static_cast<Eigen::Index>(data.m()));
  g.xtx.selfadjointView<Eigen::Lower>().rankUpdate(data.x().transpose());
  g.xtx.triangularView<Eigen::StrictlyUpper>() = g.xtx.transpose();
  g.xty = data.x().transpose() * data.y();
  g.yty = data.y().squaredNorm();
  g.n = data.n();
  return g;
}

void set_likelihood_site(SiteParams& sites, const Gram& gram, double scale) {
  sites.likelihood_scale = scale;
  sites.likelihood_gamma = scale * gram.xtx;
  sites.likelihood_mu = scale * gram.xty;
}

SiteParams initial_sites(const Gram& gram, std::size_t m, const Hyperparameters& h) {
  const auto mm = static_cast<Eigen::Index>(m);
  SiteParams s;
  s.prior_mu = VectorXd::Zero(mm);
  s.prior_tau = VectorXd::Constant(mm, 1.0 / (h.rho * h.psi2));
  s.prior_rho = VectorXd::Zero(mm);
  s.relevance_rho = VectorXd::Zero(mm);
  s.value_mu = VectorXd::Zero(mm);
  s.value_tau = VectorXd::Zero(mm);
  const double scale = h.fixed_sigma2 ? 1.0 / *h.fixed_sigma2 : h.alpha_sigma / h.beta_sigma;
  if (gram.xtx.rows() != mm || gram.xty.size() != mm) {
    throw ValidationError("initial_sites: Gram matrix does not match feature count");
  }
  set_likelihood_site(s, gram, scale);
  return s;
}

void install_feedback_sites(SiteParams& sites, const FeedbackLog& log, const Hyperparameters& h) {
  sites.value_mu.setZero();
  sites.value_tau.setZero();
  sites.relevance_rho.setZero();
  const double lpi = logit(h.pi);
  for (const auto& fb : log.entries()) {
    const auto j = static_cast<Eigen::Index>(fb.feature);
    if (const auto* v = std::get_if<ValueAnswer>(&fb.answer)) {
      sites.value_tau(j) = 1.0 / h.omega2;
      sites.value_mu(j) = v->value / h.omega2;
    } else if (const auto* r = std::get_if<RelevanceAnswer>(&fb.answer)) {
      sites.relevance_rho(j) = r->relevant ? lpi : -lpi;
    }
  }
}

PosteriorApprox assemble(SiteParams sites, const Hyperparameters& h) {
  const auto m = static_cast<Eigen::Index>(sites.m());
  MatrixXd precision = sites.likelihood_gamma;
  precision.diagonal() += sites.prior_tau + sites.value_tau;

  Eigen::LLT<MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("posterior precision matrix is not positive definite");
  }
  ++g_dense_inversions;
  PosteriorApprox post;
  post.sigma_bar = llt.solve(MatrixXd::Identity(m, m));
  post.sigma_bar = 0.5 * (post.sigma_bar + post.sigma_bar.transpose()).eval();
  if (!post.sigma_bar.allFinite() || (post.sigma_bar.diagonal().array() <= 0).any()) {
    throw NumericalError("posterior covariance is not positive definite");
  }
  post.m_bar = post.sigma_bar * (sites.likelihood_mu + sites.prior_mu + sites.value_mu);

  const double prior_logit = logit(h.rho);
  post.rho_bar.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    post.rho_bar(j) = sigmoid(sites.prior_rho(j) + prior_logit + sites.relevance_rho(j));
  }
  if (h.fixed_sigma2) {
    // Point mass on the noise: (1, sigma2) gives E[sigma^-2] = 1/sigma2 and s^2 = sigma2.
    post.alpha_bar = 1.0;
    post.beta_bar = *h.fixed_sigma2;
  } else {
    post.alpha_bar = h.alpha_sigma + sites.likelihood_alpha;
    post.beta_bar = h.beta_sigma - sites.likelihood_beta;
  }
  post.sites = std::move(sites);
  return post;
}

}  // namespace elicit
