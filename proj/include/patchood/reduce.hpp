#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "patchood/tensorio.hpp"

namespace patchood {

using Index3 = std::array<std::size_t, 3>;

struct PoolingConfig {
  Index3 kernel{2, 2, 2};
  Index3 stride{2, 2, 2};
  std::size_t max_elements = 10000;

  /// Throws InvalidArgument when any entry is zero.
  void validate() const;
  bool operator==(const PoolingConfig&) const = default;
};

/// Encoder activations of one patch, laid out channels x depth x height x width.
struct FeatureTensor {
  std::size_t channels = 1;
  Index3 spatial{1, 1, 1};
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }

  /// Accepts 4-D (C,D,H,W) or 3-D (D,H,W, treated as one channel) tensors.
  static FeatureTensor from_tensor(const Tensor& t);
};

/// The flattened low-dimensional projection of a patch feature.
struct PooledFeature {
  std::vector<double> values;

  std::size_t d() const noexcept { return values.size(); }
};

/// One pooling pass over the spatial axes. Edge windows that run past the
/// boundary average only the in-bounds elements.
FeatureTensor avg_pool_once(const FeatureTensor& t, const PoolingConfig& cfg);

/// Pools until fewer than `cfg.max_elements` values remain, then flattens.
/// Once every spatial axis is 1, adjacent channel pairs are averaged instead.
PooledFeature reduce_to_vector(const FeatureTensor& t, const PoolingConfig& cfg);

/// Dimensionality `reduce_to_vector` produces for a given input layout.
std::size_t reduced_dimension(std::size_t channels, const Index3& spatial, const PoolingConfig& cfg);

}  // namespace patchood
