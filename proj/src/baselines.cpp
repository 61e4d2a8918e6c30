#include "patchood/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchood/error.hpp"

namespace patchood {
namespace {

std::size_t voxels(const Index3& s) { return s[0] * s[1] * s[2]; }

void split_class_shape(const Tensor& t, std::size_t& classes, Index3& shape, const char* what) {
  if (t.shape.size() != 4)
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " volumes must be 4-D (K, D, H, W)");
  if (t.shape[0] < 2) throw Error(ErrorCode::ShapeMismatch, std::string(what) + " volumes need at least 2 classes");
  classes = t.shape[0];
  shape = {t.shape[1], t.shape[2], t.shape[3]};
}

}  // namespace

SoftmaxVolume SoftmaxVolume::from_tensor(const Tensor& t) {
  SoftmaxVolume v;
  split_class_shape(t, v.classes, v.shape, "softmax");
  v.probs = t.data;
  return v;
}

void SoftmaxVolume::validate() const {
  const std::size_t n = voxels(shape);
  if (probs.size() != classes * n) throw Error(ErrorCode::ShapeMismatch, "softmax layout does not match its value count");
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      const double p = probs[k * n + i];
      if (!(p >= -kSoftmaxSumTolerance && p <= 1.0 + kSoftmaxSumTolerance))
        throw Error(ErrorCode::NotNormalized, "probability outside [0,1] at voxel " + std::to_string(i));
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSoftmaxSumTolerance)
      throw Error(ErrorCode::NotNormalized, "class probabilities sum to " + std::to_string(sum) + " at voxel " +
                                                std::to_string(i));
  }
}

LogitVolume LogitVolume::from_tensor(const Tensor& t) {
  LogitVolume v;
  split_class_shape(t, v.classes, v.shape, "logit");
  for (double x : t.data)
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteInput, "logits must be finite");
  v.logits = t.data;
  return v;
}

McSampleSet McSampleSet::from_tensors(std::span<const Tensor> ts) {
  McSampleSet s;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Tensor& t = ts[i];
    std::size_t channels = 1;
    Index3 shape{};
    std::vector<double> values;
    if (t.shape.size() == 3) {
      shape = {t.shape[0], t.shape[1], t.shape[2]};
      values = t.data;
    } else if (t.shape.size() == 4 && t.shape[0] >= 2) {
      shape = {t.shape[1], t.shape[2], t.shape[3]};
      const std::size_t n = voxels(shape);
      if (t.shape[0] == 2) {
        values.assign(t.data.begin() + static_cast<std::ptrdiff_t>(n), t.data.end());
      } else {
        channels = t.shape[0];
        values = t.data;
      }
    } else {
      throw Error(ErrorCode::ShapeMismatch, "MC sample " + std::to_string(i) + " must be (D,H,W) or (K,D,H,W)");
    }
    if (i == 0) {
      s.channels = channels;
      s.shape = shape;
    } else if (channels != s.channels || shape != s.shape) {
      throw Error(ErrorCode::ShapeMismatch, "MC sample " + std::to_string(i) + " differs in shape from sample 0");
    }
    s.samples.push_back(std::move(values));
  }
  return s;
}

UncertaintyMask max_softmax_uncertainty(const SoftmaxVolume& v) {
  v.validate();
  const std::size_t n = voxels(v.shape);
  UncertaintyMask mask{v.shape, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    for (std::size_t k = 0; k < v.classes; ++k) best = std::max(best, v.probs[k * n + i]);
    mask.values[i] = std::clamp(1.0 - best, 0.0, 1.0);
  }
  return mask;
}

UncertaintyMask temp_scaled_uncertainty(const LogitVolume& v, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  const std::size_t n = voxels(v.shape);
  if (v.logits.size() != v.classes * n) throw Error(ErrorCode::ShapeMismatch, "logit layout does not match its value count");
  UncertaintyMask mask{v.shape, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    double top = v.logits[i];
    for (std::size_t k = 1; k < v.classes; ++k) top = std::max(top, v.logits[k * n + i]);
    // With max-subtraction the winning class contributes exp(0) = 1.
    double denom = 0.0;
    for (std::size_t k = 0; k < v.classes; ++k) denom += std::exp((v.logits[k * n + i] - top) / temperature);
    mask.values[i] = std::clamp(1.0 - 1.0 / denom, 0.0, 1.0);
  }
  return mask;
}

UncertaintyMask kl_from_uniform_uncertainty(const SoftmaxVolume& v, KlInversion inversion) {
  v.validate();
  const std::size_t n = voxels(v.shape);
  const double log_k = std::log(static_cast<double>(v.classes));
  UncertaintyMask mask{v.shape, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    double entropy = 0.0;
    for (std::size_t k = 0; k < v.classes; ++k) {
      const double p = v.probs[k * n + i];
      if (p > 0.0) entropy -= p * std::log(p);
    }
    const double kl = std::max(0.0, log_k - entropy);
    mask.values[i] = inversion == KlInversion::Affine ? std::clamp(1.0 - kl / log_k, 0.0, 1.0)
                                                      : std::max(0.0, log_k - kl);
  }
  return mask;
}

UncertaintyMask mc_dropout_uncertainty(const McSampleSet& s) {
  if (s.samples.size() < 2)
    throw Error(ErrorCode::TooFewSamples, "MC dropout needs at least 2 samples, got " + std::to_string(s.samples.size()));
  const std::size_t n = voxels(s.shape);
  for (const auto& sample : s.samples)
    if (sample.size() != s.channels * n) throw Error(ErrorCode::ShapeMismatch, "MC sample layout does not match its shape");
  const auto count = static_cast<double>(s.samples.size());
  UncertaintyMask mask{s.shape, std::vector<double>(n, 0.0)};
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t at = c * n + i;
      double mean = 0.0;
      for (const auto& sample : s.samples) mean += sample[at];
      mean /= count;
      double ss = 0.0;
      for (const auto& sample : s.samples) ss += (sample[at] - mean) * (sample[at] - mean);
      mask.values[i] += std::sqrt(ss / count);
    }
  }
  if (s.channels > 1)
    for (auto& v : mask.values) v /= static_cast<double>(s.channels);
  return mask;
}

}  // namespace patchood
