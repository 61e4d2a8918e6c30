#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "patchood/reduce.hpp"

namespace patchood {

/// Single multivariate Gaussian fitted to pooled training features.
///
/// `sigma` is the biased (1/N) sample covariance. `chol` is the lower
/// Cholesky factor of `sigma + epsilon * I`, where `epsilon` is the ridge
/// that had to be added for the factorization to succeed (0 when none).
struct GaussianModel {
  std::size_t d = 0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd chol;
  double epsilon = 0.0;
  std::size_t n_samples = 0;
  PoolingConfig pooling;
};

/// Squared Mahalanobis distance, always >= 0.
struct MahalanobisScore {
  double value = 0.0;
};

inline constexpr int kMaxRidgeRetries = 10;

GaussianModel fit_gaussian(std::span<const PooledFeature> samples, const PoolingConfig& pooling = {});

/// Lower Cholesky factor of `sigma` with the ridge-retry schedule applied.
/// Returns the factor and writes the ridge that was used to `epsilon`.
Eigen::MatrixXd regularized_cholesky(const Eigen::MatrixXd& sigma, double& epsilon);

MahalanobisScore mahalanobis(std::span<const double> z, const GaussianModel& m);
inline MahalanobisScore mahalanobis(const PooledFeature& z, const GaussianModel& m) {
  return mahalanobis(std::span<const double>(z.values), m);
}

double euclidean_sq(std::span<const double> z, const GaussianModel& m);
inline double euclidean_sq(const PooledFeature& z, const GaussianModel& m) {
  return euclidean_sq(std::span<const double>(z.values), m);
}

/// Writes mu/sigma/chol as arrays plus a `meta.json` member into one
/// `.npz`-compatible file.
void save_model(const GaussianModel& m, const std::filesystem::path& path);
GaussianModel load_model(const std::filesystem::path& path);

}  // namespace patchood
