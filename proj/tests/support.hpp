#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "elicit/model.hpp"

namespace testing {

using elicit::MatrixXd;
using elicit::VectorXd;

inline MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = z(rng);
  }
  return a;
}

/// y = X w + noise with a few nonzero coefficients.
inline elicit::Dataset random_dataset(std::size_t n, std::size_t m, std::uint64_t seed, double noise_sd = 1.0) {
  std::mt19937_64 rng(seed);
  MatrixXd x = gaussian_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  VectorXd w = gaussian_matrix(rng, static_cast<Eigen::Index>(m), 1).col(0);
  std::bernoulli_distribution keep(0.5);
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (!keep(rng)) w(j) = 0.0;
  }
  VectorXd y = x * w + noise_sd * gaussian_matrix(rng, static_cast<Eigen::Index>(n), 1).col(0);
  return elicit::Dataset(std::move(x), std::move(y), elicit::default_feature_names(m));
}

inline MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index m) {
  const MatrixXd a = gaussian_matrix(rng, m, m);
  return a * a.transpose() / static_cast<double>(m) + 0.1 * MatrixXd::Identity(m, m);
}

inline std::string temp_path(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  return "/tmp/elicit_test_" + std::to_string(rng()) + "_" + name;
}

}  // namespace testing
