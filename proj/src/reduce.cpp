#include "patchood/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchood/error.hpp"

namespace patchood {
namespace {

void require_finite(const std::vector<double>& values) {
  for (double v : values)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "feature tensor contains a non-finite value");
}

std::size_t pooled_extent(std::size_t extent, std::size_t stride) { return (extent + stride - 1) / stride; }

std::size_t spatial_count(const Index3& s) { return s[0] * s[1] * s[2]; }

Index3 pooled_spatial(const Index3& s, const PoolingConfig& cfg) {
  return {pooled_extent(s[0], cfg.stride[0]), pooled_extent(s[1], cfg.stride[1]), pooled_extent(s[2], cfg.stride[2])};
}

bool spatial_exhausted(const Index3& s) { return s[0] == 1 && s[1] == 1 && s[2] == 1; }

FeatureTensor pool_channel_pairs(const FeatureTensor& t) {
  const std::size_t plane = spatial_count(t.spatial);
  FeatureTensor out;
  out.channels = (t.channels + 1) / 2;
  out.spatial = t.spatial;
  out.values.assign(out.channels * plane, 0.0);
  for (std::size_t c = 0; c < out.channels; ++c) {
    const std::size_t first = 2 * c;
    const std::size_t last = std::min(first + 2, t.channels);
    const double inv = 1.0 / static_cast<double>(last - first);
    for (std::size_t i = 0; i < plane; ++i) {
      double sum = 0.0;
      for (std::size_t src = first; src < last; ++src) sum += t.values[src * plane + i];
      out.values[c * plane + i] = sum * inv;
    }
  }
  return out;
}

}  // namespace

void PoolingConfig::validate() const {
  for (int a = 0; a < 3; ++a)
    if (kernel[a] == 0 || stride[a] == 0)
      throw Error(ErrorCode::InvalidArgument, "pooling kernel and stride entries must be positive");
  if (max_elements == 0) throw Error(ErrorCode::InvalidArgument, "pooling max_elements must be >= 1");
}

FeatureTensor FeatureTensor::from_tensor(const Tensor& t) {
  FeatureTensor f;
  if (t.shape.size() == 4) {
    f.channels = t.shape[0];
    f.spatial = {t.shape[1], t.shape[2], t.shape[3]};
  } else if (t.shape.size() == 3) {
    f.spatial = {t.shape[0], t.shape[1], t.shape[2]};
  } else {
    throw Error(ErrorCode::ShapeMismatch,
                "feature tensors must be 3-D or 4-D, got " + std::to_string(t.shape.size()) + "-D");
  }
  f.values = t.data;
  return f;
}

FeatureTensor avg_pool_once(const FeatureTensor& t, const PoolingConfig& cfg) {
  cfg.validate();
  if (t.values.size() != t.channels * spatial_count(t.spatial))
    throw Error(ErrorCode::ShapeDataMismatch, "feature tensor layout does not match its value count");
  require_finite(t.values);

  const auto [D, H, W] = t.spatial;
  FeatureTensor out;
  out.channels = t.channels;
  out.spatial = pooled_spatial(t.spatial, cfg);
  const auto [oD, oH, oW] = out.spatial;
  out.values.assign(out.channels * oD * oH * oW, 0.0);

  for (std::size_t c = 0; c < t.channels; ++c) {
    const double* src = t.values.data() + c * D * H * W;
    double* dst = out.values.data() + c * oD * oH * oW;
    for (std::size_t od = 0; od < oD; ++od) {
      const std::size_t d0 = od * cfg.stride[0], d1 = std::min(d0 + cfg.kernel[0], D);
      for (std::size_t oh = 0; oh < oH; ++oh) {
        const std::size_t h0 = oh * cfg.stride[1], h1 = std::min(h0 + cfg.kernel[1], H);
        for (std::size_t ow = 0; ow < oW; ++ow) {
          const std::size_t w0 = ow * cfg.stride[2], w1 = std::min(w0 + cfg.kernel[2], W);
          double sum = 0.0;
          for (std::size_t d = d0; d < d1; ++d)
            for (std::size_t h = h0; h < h1; ++h)
              for (std::size_t w = w0; w < w1; ++w) sum += src[(d * H + h) * W + w];
          const auto n = static_cast<double>((d1 - d0) * (h1 - h0) * (w1 - w0));
          dst[(od * oH + oh) * oW + ow] = sum / n;
        }
      }
    }
  }
  return out;
}

PooledFeature reduce_to_vector(const FeatureTensor& t, const PoolingConfig& cfg) {
  cfg.validate();
  if (t.values.size() != t.channels * spatial_count(t.spatial))
    throw Error(ErrorCode::ShapeDataMismatch, "feature tensor layout does not match its value count");
  require_finite(t.values);

  FeatureTensor cur = t;
  while (cur.size() >= cfg.max_elements && !spatial_exhausted(cur.spatial)) {
    // A stride of 1 on every remaining axis would never shrink the tensor.
    if (spatial_count(pooled_spatial(cur.spatial, cfg)) == spatial_count(cur.spatial)) break;
    cur = avg_pool_once(cur, cfg);
  }
  while (cur.size() >= cfg.max_elements && cur.channels > 1) cur = pool_channel_pairs(cur);
  // A single channel with non-shrinking spatial axes cannot be reduced further.
  if (cur.size() >= cfg.max_elements)
    throw Error(ErrorCode::InvalidArgument, "pooling configuration cannot reach the element threshold");
  return PooledFeature{std::move(cur.values)};
}

std::size_t reduced_dimension(std::size_t channels, const Index3& spatial, const PoolingConfig& cfg) {
  cfg.validate();
  Index3 s = spatial;
  std::size_t c = channels;
  while (c * spatial_count(s) >= cfg.max_elements && !spatial_exhausted(s)) {
    const Index3 next = pooled_spatial(s, cfg);
    if (spatial_count(next) == spatial_count(s)) break;
    s = next;
  }
  while (c * spatial_count(s) >= cfg.max_elements && c > 1) c = (c + 1) / 2;
  return c * spatial_count(s);
}

}  // namespace patchood
