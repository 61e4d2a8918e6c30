#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>

#include "patchood/manifest.hpp"
#include "patchood/rng.hpp"

namespace patchood {

/// Parameters of a synthetic ID/OOD population pair.
///
/// ID features follow N(mu0, Sigma0). OOD features follow
/// N(mu0 + delta, scale^2 * R Sigma0 R^T), where |delta| is `mean_shift`
/// times the root mean marginal variance of Sigma0 and R rotates consecutive
/// coordinate pairs by `cov_rotation` radians.
struct ShiftSpec {
  std::size_t d = 16;
  std::size_t n_train = 100;
  std::size_t n_val = 20;
  std::size_t n_test = 20;
  std::size_t n_ood = 20;
  double mean_shift = 0.0;
  double cov_rotation = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

ShiftSpec load_shift_spec(const std::filesystem::path& path);

/// Fixed geometry of every synthetic subject: a (8, 12, 12) image tiled by
/// four (8, 8, 8) patches, each carrying a (d, 2, 2, 2) float32 feature
/// tensor that one (2,2,2) pooling pass reduces to d values.
inline constexpr Index3 kSynthImageShape{8, 12, 12};
inline constexpr Index3 kSynthPatchSize{8, 8, 8};
inline constexpr std::size_t kSynthMcSamples = 10;

struct SynthResult {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  Eigen::VectorXd mu0;
  Eigen::MatrixXd sigma0;
};

/// Writes feature tensors, softmax/logit/MC volumes, predictions and ground
/// truths under `out_dir` plus `out_dir/manifest.json`. Identical specs give
/// byte-identical output.
SynthResult generate(const ShiftSpec& spec, const std::filesystem::path& out_dir);

/// Random symmetric positive definite matrix Q diag(lambda) Q^T with Q a
/// random orthogonal basis and lambda log-uniform in [0.1, 10].
Eigen::MatrixXd random_covariance(std::size_t d, Rng& rng);

}  // namespace patchood
