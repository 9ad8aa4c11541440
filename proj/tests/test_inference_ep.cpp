#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "elicit/exact_oracle.hpp"
#include "elicit/inference_ep.hpp"
#include "elicit/sim_harness.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace elicit;

namespace {

// Coordinate-ascent mean-field VB for a pure-slab linear model with a Gamma
// prior on the noise precision. Returns E[precision] at the fixed point.
double mean_field_noise_precision(const MatrixXd& x, const VectorXd& y, double psi2, double alpha, double beta) {
  const auto m = x.cols();
  const double n = static_cast<double>(x.rows());
  double e_prec = alpha / beta;
  for (int it = 0; it < 100000; ++it) {
    const MatrixXd cov = (e_prec * x.transpose() * x + MatrixXd::Identity(m, m) / psi2).inverse();
    const VectorXd mean = e_prec * cov * x.transpose() * y;
    const double b = beta + 0.5 * ((y - x * mean).squaredNorm() + (x.transpose() * x * cov).trace());
    const double next = (alpha + 0.5 * n) / b;
    if (std::abs(next - e_prec) < 1e-15) return next;
    e_prec = next;
  }
  return e_prec;
}

Hyperparameters fixed_noise(double rho = 0.5) {
  Hyperparameters h;
  h.psi2 = 1.0;
  h.rho = rho;
  h.fixed_sigma2 = 1.0;
  return h;
}

}  // namespace

TEST_CASE("tilted moments at the symmetric point") {
  const auto t = spike_slab_tilted_moments(0.0, 1.0, 0.0, 1.0);
  const auto q = testing::quadrature_tilted(0.0, 1.0, 0.0, 1.0);
  CHECK(t.p_slab == doctest::Approx(0.41421).epsilon(1e-5));
  CHECK(t.z_ratio_log == doctest::Approx(-0.34657).epsilon(1e-5));
  CHECK(t.mean == 0.0);
  CHECK(std::abs(t.p_slab - q.p_slab) < 1e-8);
  CHECK(std::abs(t.z_ratio_log - q.z_ratio_log) < 1e-8);
}

TEST_CASE("tilted moments match quadrature at mean 2, variance 0.5") {
  const auto t = spike_slab_tilted_moments(2.0, 0.5, 0.0, 1.0);
  const auto q = testing::quadrature_tilted(2.0, 0.5, 0.0, 1.0);
  CHECK(std::abs(t.mean - q.mean) < 1e-8);
  CHECK(std::abs(t.var - q.var) < 1e-8);
  CHECK(std::abs(t.p_slab - q.p_slab) < 1e-8);
  CHECK(std::abs(t.z_ratio_log - q.z_ratio_log) < 1e-8);
}

TEST_CASE("tilted moments match quadrature over the parameter grid") {
  for (double mean : {-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0}) {
    for (double var : {0.1, 1.0, 10.0}) {
      for (double lr : {-2.0, 0.0, 2.0}) {
        for (double psi2 : {0.01, 1.0}) {
          const auto t = spike_slab_tilted_moments(mean, var, lr, psi2);
          const auto q = testing::quadrature_tilted(mean, var, lr, psi2);
          CAPTURE(mean);
          CAPTURE(var);
          CAPTURE(lr);
          CAPTURE(psi2);
          CHECK(std::abs(t.mean - q.mean) < 1e-8);
          CHECK(std::abs(t.var - q.var) < 1e-8);
          CHECK(std::abs(t.p_slab - q.p_slab) < 1e-8);
          CHECK(std::abs(t.z_ratio_log - q.z_ratio_log) < 1e-8);
          CHECK(t.var >= 0.0);
          CHECK(t.p_slab >= 0.0);
          CHECK(t.p_slab <= 1.0);
        }
      }
    }
  }
}

TEST_CASE("tilted moments in the vanishing slab limit") {
  const auto t = spike_slab_tilted_moments(1.5, 0.7, 0.4, 1e-12);
  CHECK(t.p_slab == doctest::Approx(sigmoid(0.4)).epsilon(1e-9));
  CHECK(std::abs(t.mean) < 1e-10);
  CHECK(std::abs(t.var) < 1e-10);
}

TEST_CASE("tilted moments reject invalid input") {
  CHECK_THROWS_AS(spike_slab_tilted_moments(std::nan(""), 1.0, 0.0, 1.0), NumericalError);
  CHECK_THROWS_AS(spike_slab_tilted_moments(0.0, 0.0, 0.0, 1.0), NumericalError);
  CHECK_THROWS_AS(spike_slab_tilted_moments(0.0, std::numeric_limits<double>::infinity(), 0.0, 1.0), NumericalError);
  CHECK_THROWS_AS(spike_slab_tilted_moments(0.0, 1.0, std::nan(""), 1.0), NumericalError);
}

TEST_CASE("degenerate spike caps the site precision") {
  const double inf = std::numeric_limits<double>::infinity();
  const auto r = refresh_prior_site(0.3, 2.0, 0.0, 0.0, -inf, 1.0, 1e-10);
  CHECK(r.updated);
  CHECK(r.tau == doctest::Approx(1e10));
  // The capped site still reproduces the tilted mean (zero).
  const double cavity_prec = 0.5, cavity_mean = 0.3;
  const double new_mean = (cavity_mean * cavity_prec + r.mu) / (cavity_prec + r.tau);
  CHECK(std::abs(new_mean) < 1e-9);
}

TEST_CASE("improper cavity skips the update") {
  const auto r = refresh_prior_site(0.0, 1.0, 2.0, 0.0, 0.0, 1.0, 1e-10);
  CHECK_FALSE(r.updated);
}

TEST_CASE("the prior is a fixed point of the prior sweep") {
  const auto h = fixed_noise(0.2);
  auto post = prior_posterior(4, h);
  for (int k = 0; k < 20; ++k) post = update_prior_sites(post, h, {});
  CHECK(post.m_bar.cwiseAbs().maxCoeff() < 1e-10);
  CHECK((post.rho_bar.array() - 0.2).abs().maxCoeff() < 1e-10);
  CHECK((post.sigma_bar.diagonal().array() - 0.2).abs().maxCoeff() < 1e-10);
}

TEST_CASE("fit with no data and no feedback returns the prior") {
  const auto h = fixed_noise(0.3);
  const Dataset empty(MatrixXd::Zero(0, 3), VectorXd::Zero(0), default_feature_names(3));
  const auto fit = fit_posterior(empty, FeedbackLog(3), h, {});
  CHECK(fit.diagnostics.converged);
  CHECK(fit.posterior.m_bar.cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit.posterior.rho_bar.array() - 0.3).abs().maxCoeff() < 1e-10);
}

TEST_CASE("learned noise with no data keeps the Gamma prior") {
  Hyperparameters h;
  h.fixed_sigma2.reset();
  h.alpha_sigma = 2.0;
  h.beta_sigma = 3.0;
  const Dataset empty(MatrixXd::Zero(0, 2), VectorXd::Zero(0), default_feature_names(2));
  const auto post = fit_posterior(empty, FeedbackLog(2), h, {}).posterior;
  CHECK(post.alpha_bar == doctest::Approx(2.0));
  CHECK(post.beta_bar == doctest::Approx(3.0));
}

TEST_CASE("noise-free data drive the Gamma rate toward its prior value") {
  std::mt19937_64 rng(3);
  const MatrixXd x = testing::gaussian_matrix(rng, 4000, 2);
  const VectorXd y = x * Eigen::Vector2d(1.0, -0.5);
  Hyperparameters h;
  h.fixed_sigma2.reset();
  h.rho = 0.5;
  const auto post = fit_posterior(Dataset(x, y, default_feature_names(2)), FeedbackLog(2), h, {}).posterior;
  CHECK(post.beta_bar - h.beta_sigma < 0.01 * h.beta_sigma);
  CHECK(post.beta_bar > h.beta_sigma);
}

TEST_CASE("learned noise agrees with a mean-field reference on a scalar problem") {
  MatrixXd x(2, 1);
  x << 1, 1;
  VectorXd y(2);
  y << 1, 1;
  Hyperparameters h;
  h.fixed_sigma2.reset();
  h.rho = 1.0;
  h.psi2 = 1.0;
  h.alpha_sigma = 1.0;
  h.beta_sigma = 1.0;
  EpConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iters = 5000;
  const auto fit = fit_posterior(Dataset(x, y, {"x"}), FeedbackLog(1), h, cfg);
  CHECK(fit.diagnostics.converged);
  const double reference = mean_field_noise_precision(x, y, 1.0, 1.0, 1.0);
  CHECK(std::abs(fit.posterior.noise_precision() - reference) < 1e-9);
}

TEST_CASE("noise precision stays positive and finite every sweep") {
  const auto data = testing::random_dataset(15, 8, 11, 0.5);
  Hyperparameters h;
  h.fixed_sigma2.reset();
  h.rho = 0.3;
  const Gram gram = compute_gram(data);
  SiteParams sites = initial_sites(gram, 8, h);
  auto post = assemble(sites, h);
  for (int k = 0; k < 100; ++k) {
    post = update_prior_sites(post, h, {});
    post = update_likelihood_vb(post, gram, h);
    const double e = post.noise_precision();
    REQUIRE(std::isfinite(e));
    REQUIRE(e > 0.0);
  }
}

TEST_CASE("relevance feedback site uses the log odds of pi") {
  Hyperparameters h = fixed_noise();
  h.pi = 0.9;
  const auto data = testing::random_dataset(3, 2, 5);
  const auto base = fit_posterior(data, FeedbackLog(2), h, {}).posterior;
  const auto next = apply_relevance_feedback_site(base, 0, true, h, {});
  CHECK(next.sites.relevance_rho(0) == doctest::Approx(2.19722).epsilon(1e-5));
  CHECK(next.rho_bar(0) > base.rho_bar(0));
  CHECK_THROWS_AS(apply_relevance_feedback_site(next, 0, false, h, {}), ValidationError);
  CHECK_THROWS_AS(apply_relevance_feedback_site(base, 2, true, h, {}), ValidationError);
}

TEST_CASE("uninformative relevance feedback leaves a converged posterior unchanged") {
  Hyperparameters h = fixed_noise();
  h.pi = 0.5;  // outside the validated range; used only to probe the boundary
  const auto data = testing::random_dataset(6, 3, 9);
  EpConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iters = 5000;
  auto h_valid = h;
  h_valid.pi = 0.9;
  const auto base = fit_posterior(data, FeedbackLog(3), h_valid, cfg).posterior;
  const auto next = apply_relevance_feedback_site(base, 1, true, h, cfg);
  CHECK(next.sites.relevance_rho(1) == 0.0);
  CHECK((next.m_bar - base.m_bar).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((next.rho_bar - base.rho_bar).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("relevance feedback moves inclusion in the direction of the exact posterior") {
  Hyperparameters h = fixed_noise();
  h.pi = 0.9;
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto data = testing::random_dataset(3, 2, seed);
    const auto base = fit_posterior(data, FeedbackLog(2), h, {}).posterior;
    const auto next = apply_relevance_feedback_site(base, 0, true, h, {});
    const auto exact_before = exact_posterior(data, FeedbackLog(2), h);
    const auto exact_after = exact_posterior(data, FeedbackLog(2).with(Feedback::relevance(0, true)), h);
    CHECK(next.rho_bar(0) > base.rho_bar(0));
    CHECK(exact_after.inclusion_probs(0) > exact_before.inclusion_probs(0));
    if (std::abs(base.m_bar(0)) > 1e-6) {
      CHECK(std::abs(next.m_bar(0)) >= std::abs(base.m_bar(0)) - 1e-12);
      CHECK(std::abs(exact_after.marginal_mean(0)) >= std::abs(exact_before.marginal_mean(0)) - 1e-12);
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("relevance evidence is monotone") {
  Hyperparameters h = fixed_noise(0.4);
  h.pi = 0.8;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto data = testing::random_dataset(5, 6, seed);
    const auto base = fit_posterior(data, FeedbackLog(6), h, {}).posterior;
    const std::size_t j = seed % 6;
    CHECK(apply_relevance_feedback_site(base, j, true, h, {}).rho_bar(static_cast<Eigen::Index>(j)) >
          base.rho_bar(static_cast<Eigen::Index>(j)));
    CHECK(apply_relevance_feedback_site(base, j, false, h, {}).rho_bar(static_cast<Eigen::Index>(j)) <
          base.rho_bar(static_cast<Eigen::Index>(j)));
  }
}

TEST_CASE("value feedback on a pure slab is a conjugate update") {
  Hyperparameters h = fixed_noise(1.0);
  h.omega2 = 1.0;
  const auto post = apply_value_feedback_site(prior_posterior(2, h), 0, 2.0, h);
  CHECK(post.m_bar(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post.sigma_bar(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(post.m_bar(1) == 0.0);
}

TEST_CASE("infinitely noisy value feedback changes nothing") {
  Hyperparameters h = fixed_noise();
  h.omega2 = std::numeric_limits<double>::infinity();
  const auto data = testing::random_dataset(6, 3, 2);
  EpConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iters = 5000;
  const auto base = fit_posterior(data, FeedbackLog(3), h, cfg).posterior;
  const auto next = apply_value_feedback_site(base, 1, 5.0, h, cfg);
  CHECK((next.m_bar - base.m_bar).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((next.sigma_bar - base.sigma_bar).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("two value feedbacks change the precision at two diagonal entries only") {
  const auto h = fixed_noise();
  const auto data = testing::random_dataset(5, 4, 8);
  const auto base = fit_posterior(data, FeedbackLog(4), h, {}).posterior;
  const auto next = apply_value_feedback_site(apply_value_feedback_site(base, 0, 0.5, h), 2, -1.0, h);
  const MatrixXd delta = next.sigma_bar.inverse() - base.sigma_bar.inverse();
  for (Eigen::Index r = 0; r < 4; ++r) {
    for (Eigen::Index c = 0; c < 4; ++c) {
      if (r == c && (r == 0 || r == 2)) continue;
      CHECK(std::abs(delta(r, c)) < 1e-8);
    }
  }
  Eigen::JacobiSVD<MatrixXd> svd(next.sigma_bar - base.sigma_bar);
  CHECK(svd.singularValues()(2) < 1e-10 * svd.singularValues()(0));
  CHECK(svd.singularValues()(1) > 1e-6 * svd.singularValues()(0));
}

TEST_CASE("value sites commute") {
  const auto h = fixed_noise();
  const Gram gram = compute_gram(testing::random_dataset(4, 5, 3));
  const auto ab = FeedbackLog(5).with(Feedback::value(1, 0.3)).with(Feedback::value(4, -2.0));
  const auto ba = FeedbackLog(5).with(Feedback::value(4, -2.0)).with(Feedback::value(1, 0.3));
  SiteParams s1 = initial_sites(gram, 5, h), s2 = s1;
  install_feedback_sites(s1, ab, h);
  install_feedback_sites(s2, ba, h);
  const auto p1 = assemble(s1, h), p2 = assemble(s2, h);
  CHECK((p1.m_bar - p2.m_bar).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((p1.sigma_bar - p2.sigma_bar).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("covariance stays positive definite") {
  Hyperparameters h = fixed_noise(0.2);
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto data = testing::random_dataset(4, 10, seed);
    auto log = FeedbackLog(10).with(Feedback::relevance(seed % 10, true)).with(Feedback::value((seed + 3) % 10, 1.0));
    const auto post = fit_posterior(data, log, h, {}).posterior;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(post.sigma_bar);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    CHECK((post.rho_bar.array() >= 0.0).all());
    CHECK((post.rho_bar.array() <= 1.0).all());
  }
}

TEST_CASE("small instance agrees with exact enumeration") {
  const auto h = fixed_noise();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto data = testing::random_dataset(3, 2, seed);
    const auto post = fit_posterior(data, FeedbackLog(2), h, {}).posterior;
    const auto exact = exact_posterior(data, FeedbackLog(2), h);
    CHECK((post.m_bar - exact.marginal_mean).cwiseAbs().maxCoeff() < 0.05);
    CHECK((post.rho_bar - exact.inclusion_probs).cwiseAbs().maxCoeff() < 0.05);
  }
}

TEST_CASE("synthetic configuration converges in under 200 sweeps") {
  SyntheticSpec spec;
  spec.n = 10;
  spec.m = 12;
  spec.m_star = 10;
  int worst = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    spec.seed = seed;
    const auto problem = generate_synthetic(spec);
    auto h = fixed_noise(10.0 / 12.0);
    const auto fit = fit_posterior(problem.train, FeedbackLog(12), h, {});
    CHECK(fit.diagnostics.converged);
    CHECK(fit.diagnostics.sweeps < 200);
    worst = std::max(worst, fit.diagnostics.sweeps);
  }
  MESSAGE("most sweeps over 10 seeds: " << worst);
}

TEST_CASE("warm start reaches the cold fixed point") {
  const auto h = fixed_noise(0.4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = testing::random_dataset(6, 6, seed);
    const auto base = fit_posterior(data, FeedbackLog(6), h, {}).posterior;
    const auto log = FeedbackLog(6).with(Feedback::relevance(2, true));
    const auto cold = fit_posterior(data, log, h, {}).posterior;
    const auto warm = fit_posterior(data, log, h, {}, base.sites).posterior;
    CHECK((cold.m_bar - warm.m_bar).cwiseAbs().maxCoeff() < 1e-4);
    CHECK((cold.rho_bar - warm.rho_bar).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("fit reports non-convergence instead of failing") {
  const auto data = testing::random_dataset(5, 8, 4);
  EpConfig cfg;
  cfg.max_iters = 1;
  const auto fit = fit_posterior(data, FeedbackLog(8), fixed_noise(0.3), cfg);
  CHECK_FALSE(fit.diagnostics.converged);
  CHECK(fit.diagnostics.sweeps == 1);
}

TEST_CASE("fit rejects mismatched inputs") {
  const auto data = testing::random_dataset(5, 3, 4);
  CHECK_THROWS_AS(fit_posterior(data, FeedbackLog(4), fixed_noise(), {}), ValidationError);
  EpConfig bad;
  bad.damping = 0.0;
  CHECK_THROWS_AS(fit_posterior(data, FeedbackLog(3), fixed_noise(), bad), ValidationError);
}

TEST_CASE("posterior predictive") {
  Hyperparameters h = fixed_noise(1.0);
  const auto prior = prior_posterior(3, h);
  const auto p0 = posterior_predictive(prior, VectorXd::Zero(3));
  CHECK(p0.mean == 0.0);
  CHECK(p0.variance == doctest::Approx(1.0));
  const auto p1 = posterior_predictive(prior, VectorXd::Unit(3, 1));
  CHECK(p1.mean == 0.0);
  CHECK(p1.variance == doctest::Approx(2.0));
  CHECK_THROWS_AS(posterior_predictive(prior, VectorXd::Zero(2)), ValidationError);
}

TEST_CASE("posterior predictive matches Monte Carlo draws") {
  Hyperparameters h;
  h.fixed_sigma2.reset();
  h.rho = 0.4;
  const auto data = testing::random_dataset(8, 4, 21);
  const auto post = fit_posterior(data, FeedbackLog(4), h, {}).posterior;
  VectorXd x(4);
  x << 0.5, -1.0, 2.0, 0.1;
  const auto pred = posterior_predictive(post, x);

  std::mt19937_64 rng(99);
  std::normal_distribution<double> z(0.0, 1.0);
  const MatrixXd l = post.sigma_bar.llt().matrixL();
  const double s = std::sqrt(post.residual_variance());
  constexpr int kDraws = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int d = 0; d < kDraws; ++d) {
    VectorXd e(4);
    for (int k = 0; k < 4; ++k) e(k) = z(rng);
    const double yv = x.dot(post.m_bar + l * e) + s * z(rng);
    sum += yv;
    sum_sq += yv * yv;
  }
  const double mean = sum / kDraws;
  const double var = sum_sq / kDraws - mean * mean;
  const double se_mean = std::sqrt(pred.variance / kDraws);
  const double se_var = pred.variance * std::sqrt(2.0 / kDraws);
  CHECK(std::abs(mean - pred.mean) < 3 * se_mean);
  CHECK(std::abs(var - pred.variance) < 3 * se_var);
}

TEST_CASE("elicitation state keeps the posterior on uncertain answers") {
  const auto data = testing::random_dataset(6, 4, 13);
  const auto h = fixed_noise(0.3);
  const auto start = start_elicitation(data, h, {});
  const auto next = advance_elicitation(start, data, Feedback::uncertain(2), h, {});
  CHECK(next.log.was_queried(2));
  CHECK(next.posterior.m_bar == start.posterior.m_bar);
  CHECK(next.posterior.sigma_bar == start.posterior.sigma_bar);
  const auto moved = advance_elicitation(next, data, Feedback::relevance(1, true), h, {});
  CHECK(moved.posterior.rho_bar(1) > next.posterior.rho_bar(1));
}
