#pragma once

#include <span>
#include <string>
#include <vector>

#include "patchood/reduce.hpp"

namespace patchood {

/// Sliding-window patch layout over a 3-D image.
struct PatchGrid {
  Index3 image_shape{1, 1, 1};
  Index3 patch_size{1, 1, 1};
  Index3 step{1, 1, 1};
  std::vector<Index3> origins;
};

/// Per-voxel blending weights for one patch, row-major over `patch_size`.
struct CenterWeightFilter {
  Index3 patch_size{1, 1, 1};
  std::vector<double> weights;
};

/// Voxel-level uncertainty in image geometry, row-major over `shape`.
struct UncertaintyMask {
  Index3 shape{1, 1, 1};
  std::vector<double> values;
};

struct SubjectScore {
  std::string subject_id;
  double raw = 0.0;
  double normalized = 0.0;
};

inline constexpr double kDefaultSigmaScale = 1.0 / 8.0;
inline constexpr double kFilterFloor = 1e-6;

/// Half-overlapping step, rounded down and at least 1 per axis.
Index3 default_step(const Index3& patch_size);

/// Origins at multiples of `step`, with the last window on each axis pulled
/// back so it ends flush with the image boundary.
PatchGrid make_grid(const Index3& image_shape, const Index3& patch_size, const Index3& step);

/// Separable Gaussian bump with sigma = sigma_scale * patch extent per axis,
/// scaled to peak at 1 and floored at `kFilterFloor`.
CenterWeightFilter make_filter(const Index3& patch_size, double sigma_scale = kDefaultSigmaScale);

/// Blends per-patch scores into a mask: value and weight volumes accumulate
/// score*filter and filter over each patch, and the mask is their ratio.
UncertaintyMask build_uncertainty_mask(const PatchGrid& grid, std::span<const double> patch_scores,
                                       const CenterWeightFilter& filter);

/// Mean over all voxels.
double subject_score(const UncertaintyMask& mask);

/// Maps [min(id_val_raw), 2*max(id_val_raw)] linearly onto [0, 1], clamping.
std::vector<SubjectScore> normalize_scores(std::span<const SubjectScore> raw, std::span<const double> id_val_raw);
double normalize_score(double raw, double lo, double hi);

}  // namespace patchood
