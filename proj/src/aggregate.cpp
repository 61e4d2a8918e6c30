#include "patchood/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchood/error.hpp"

namespace patchood {
namespace {

std::vector<std::size_t> axis_origins(std::size_t image, std::size_t patch, std::size_t step) {
  std::vector<std::size_t> out;
  const std::size_t last = image - patch;
  for (std::size_t o = 0; o < last; o += step) out.push_back(o);
  out.push_back(last);
  return out;
}

std::vector<double> axis_weights(std::size_t n, double sigma_scale) {
  std::vector<double> w(n, 1.0);
  if (n == 1) return w;
  const double sigma = sigma_scale * static_cast<double>(n);
  const double center = (static_cast<double>(n) - 1.0) / 2.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) - center;
    w[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    peak = std::max(peak, w[i]);
  }
  for (auto& v : w) v /= peak;
  return w;
}

}  // namespace

Index3 default_step(const Index3& patch_size) {
  Index3 step{};
  for (int a = 0; a < 3; ++a) step[a] = std::max<std::size_t>(1, patch_size[a] / 2);
  return step;
}

PatchGrid make_grid(const Index3& image_shape, const Index3& patch_size, const Index3& step) {
  for (int a = 0; a < 3; ++a) {
    if (image_shape[a] == 0 || patch_size[a] == 0)
      throw Error(ErrorCode::InvalidArgument, "image and patch extents must be positive");
    if (patch_size[a] > image_shape[a])
      throw Error(ErrorCode::PatchLargerThanImage, "patch extent " + std::to_string(patch_size[a]) + " exceeds image extent " +
                                                       std::to_string(image_shape[a]) + " on axis " + std::to_string(a));
    if (step[a] == 0 || step[a] > patch_size[a])
      throw Error(ErrorCode::InvalidArgument, "step must lie in [1, patch extent]");
  }
  PatchGrid grid{image_shape, patch_size, step, {}};
  const auto od = axis_origins(image_shape[0], patch_size[0], step[0]);
  const auto oh = axis_origins(image_shape[1], patch_size[1], step[1]);
  const auto ow = axis_origins(image_shape[2], patch_size[2], step[2]);
  grid.origins.reserve(od.size() * oh.size() * ow.size());
  for (auto d : od)
    for (auto h : oh)
      for (auto w : ow) grid.origins.push_back({d, h, w});
  return grid;
}

CenterWeightFilter make_filter(const Index3& patch_size, double sigma_scale) {
  for (auto p : patch_size)
    if (p == 0) throw Error(ErrorCode::InvalidArgument, "patch extents must be positive");
  if (!(sigma_scale > 0.0) || !std::isfinite(sigma_scale))
    throw Error(ErrorCode::InvalidArgument, "sigma_scale must be positive");
  const auto wd = axis_weights(patch_size[0], sigma_scale);
  const auto wh = axis_weights(patch_size[1], sigma_scale);
  const auto ww = axis_weights(patch_size[2], sigma_scale);
  CenterWeightFilter f{patch_size, {}};
  f.weights.reserve(patch_size[0] * patch_size[1] * patch_size[2]);
  for (double a : wd)
    for (double b : wh)
      for (double c : ww) f.weights.push_back(std::max(a * b * c, kFilterFloor));
  return f;
}

UncertaintyMask build_uncertainty_mask(const PatchGrid& grid, std::span<const double> patch_scores,
                                       const CenterWeightFilter& filter) {
  if (patch_scores.size() != grid.origins.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(patch_scores.size()) + " scores for " +
                                               std::to_string(grid.origins.size()) + " patches");
  if (filter.patch_size != grid.patch_size)
    throw Error(ErrorCode::ShapeMismatch, "filter extent differs from the grid's patch size");
  for (double s : patch_scores)
    if (!std::isfinite(s) || s < 0.0) throw Error(ErrorCode::NonFiniteInput, "patch scores must be finite and >= 0");

  const auto [D, H, W] = grid.image_shape;
  const auto [pd, ph, pw] = grid.patch_size;
  std::vector<double> value(D * H * W, 0.0);
  std::vector<double> weight(D * H * W, 0.0);

  for (std::size_t p = 0; p < grid.origins.size(); ++p) {
    const auto& o = grid.origins[p];
    if (o[0] + pd > D || o[1] + ph > H || o[2] + pw > W)
      throw Error(ErrorCode::GeometryError, "patch " + std::to_string(p) + " extends past the image");
    const double score = patch_scores[p];
    const double* f = filter.weights.data();
    for (std::size_t d = 0; d < pd; ++d)
      for (std::size_t h = 0; h < ph; ++h) {
        const std::size_t row = ((o[0] + d) * H + (o[1] + h)) * W + o[2];
        for (std::size_t w = 0; w < pw; ++w, ++f) {
          value[row + w] += score * *f;
          weight[row + w] += *f;
        }
      }
  }

  UncertaintyMask mask{grid.image_shape, std::move(value)};
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    if (!(weight[i] > 0.0))
      throw Error(ErrorCode::UncoveredVoxel, "voxel " + std::to_string(i) + " is not covered by any patch");
    mask.values[i] /= weight[i];
  }
  return mask;
}

double subject_score(const UncertaintyMask& mask) {
  if (mask.values.empty()) throw Error(ErrorCode::EmptyInput, "mask has no voxels");
  double sum = 0.0;
  for (double v : mask.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "mask is not finite");
    sum += v;
  }
  return sum / static_cast<double>(mask.values.size());
}

double normalize_score(double raw, double lo, double hi) {
  if (!(hi > lo)) throw Error(ErrorCode::DegenerateRange, "normalization range is empty");
  return std::clamp((raw - lo) / (hi - lo), 0.0, 1.0);
}

std::vector<SubjectScore> normalize_scores(std::span<const SubjectScore> raw, std::span<const double> id_val_raw) {
  if (id_val_raw.empty()) throw Error(ErrorCode::EmptyInput, "no ID validation scores to normalize against");
  const auto [mn, mx] = std::minmax_element(id_val_raw.begin(), id_val_raw.end());
  const double lo = *mn;
  const double hi = 2.0 * *mx;
  if (!(hi > lo))
    throw Error(ErrorCode::DegenerateRange, "ID validation range [min, 2*max] is degenerate");
  std::vector<SubjectScore> out(raw.begin(), raw.end());
  for (auto& s : out) s.normalized = normalize_score(s.raw, lo, hi);
  return out;
}

}  // namespace patchood
