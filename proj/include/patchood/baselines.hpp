#pragma once

#include <span>
#include <vector>

#include "patchood/aggregate.hpp"
#include "patchood/tensorio.hpp"

namespace patchood {

/// Class probabilities laid out K x D x H x W.
struct SoftmaxVolume {
  std::size_t classes = 2;
  Index3 shape{1, 1, 1};
  std::vector<double> probs;

  static SoftmaxVolume from_tensor(const Tensor& t);
  /// Throws NotNormalized unless every voxel's probabilities lie in [0,1]
  /// and sum to 1 within `kSoftmaxSumTolerance`.
  void validate() const;
};

/// Pre-softmax network outputs laid out K x D x H x W.
struct LogitVolume {
  std::size_t classes = 2;
  Index3 shape{1, 1, 1};
  std::vector<double> logits;

  static LogitVolume from_tensor(const Tensor& t);
};

/// Stochastic forward passes. Each sample holds `channels` probability maps;
/// a single channel is the foreground probability.
struct McSampleSet {
  std::size_t channels = 1;
  Index3 shape{1, 1, 1};
  std::vector<std::vector<double>> samples;

  /// 3-D tensors are foreground maps; 4-D tensors with K=2 keep class 1,
  /// K>2 keep every class.
  static McSampleSet from_tensors(std::span<const Tensor> ts);
};

inline constexpr double kSoftmaxSumTolerance = 1e-4;

enum class KlInversion {
  Affine,  ///< 1 - KL / log K, in [0, 1]
  Negate,  ///< log K - KL, the entropy of p
};

UncertaintyMask max_softmax_uncertainty(const SoftmaxVolume& v);
UncertaintyMask temp_scaled_uncertainty(const LogitVolume& v, double temperature);
UncertaintyMask kl_from_uniform_uncertainty(const SoftmaxVolume& v, KlInversion inversion = KlInversion::Affine);
UncertaintyMask mc_dropout_uncertainty(const McSampleSet& s);

}  // namespace patchood
