#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchood/manifest.hpp"

namespace patchood {

struct EvaluationRecord {
  std::string subject_id;
  Split split = Split::IdTest;
  double normalized_uncertainty = 0.0;
  std::optional<double> dice;
};

struct DetectionReport {
  double boundary = 0.0;
  double tpr_val = 0.0;
  double tpr_test = 0.0;
  double fpr = 0.0;
  double detection_error = 0.0;
  std::optional<double> esce;  ///< absent when no evaluated record has a Dice value
  std::optional<double> admitted_dice_mean;
  std::optional<double> admitted_dice_sd;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  std::size_t n_ood = 0;
  std::size_t n_admitted = 0;
};

inline constexpr double kDefaultTargetTpr = 0.95;
inline constexpr int kDefaultBins = 10;

/// Smallest observed score tau with fraction(scores <= tau) >= target_tpr
/// (nearest rank, no interpolation).
double tpr_boundary(std::span<const double> id_val_scores, double target_tpr = kDefaultTargetTpr);

/// Fraction of scores at or below the boundary.
double admitted_fraction(std::span<const double> scores, double boundary);

double detection_error(double tpr, double fpr);

/// Fraction of OOD scores admitted as ID (score <= boundary).
double fpr_at_boundary(std::span<const double> ood_scores, double boundary);

/// 2|P & G| / (|P| + |G|) over binary masks; 1.0 when both are empty.
double dice(std::span<const bool> pred, std::span<const bool> gt);
/// Thresholds both volumes at 0.5 first.
double dice(std::span<const double> pred, std::span<const double> gt);

/// Expected segmentation calibration error over `bins` equal-width
/// uncertainty bins (last bin closed).
double esce(std::span<const EvaluationRecord> records, int bins = kDefaultBins);

DetectionReport evaluate(std::span<const EvaluationRecord> records, std::span<const double> id_val_scores,
                         double target_tpr = kDefaultTargetTpr, int bins = kDefaultBins);

/// Scatter rows `subject_id,split,method,normalized_uncertainty,dice`.
std::string scatter_csv(std::span<const EvaluationRecord> records, std::string_view method);

}  // namespace patchood
