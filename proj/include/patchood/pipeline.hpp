#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "patchood/aggregate.hpp"
#include "patchood/baselines.hpp"
#include "patchood/gauss.hpp"
#include "patchood/metrics.hpp"

namespace patchood {

enum class Method { Mahalanobis, MaxSoftmax, TempScaling, KlUniform, McDropout };

std::string_view to_string(Method m) noexcept;
std::optional<Method> parse_method(std::string_view s) noexcept;

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path model;
  Method method = Method::Mahalanobis;
  double temperature = 1.0;
  double sigma_scale = kDefaultSigmaScale;
  double target_tpr = kDefaultTargetTpr;
  int bins = kDefaultBins;
  KlInversion kl_inversion = KlInversion::Affine;
  std::filesystem::path out_dir = ".";
  unsigned workers = 1;
  std::ostream* log = nullptr;
};

/// Label used in output file names and reports, e.g. `temp_scaling_T100`.
std::string method_tag(const RunConfig& cfg);

/// `<id>.uncertainty` for the proposed method, `<id>.uncertainty.<tag>` otherwise.
std::string mask_stem(const std::string& subject_id, const RunConfig& cfg);

struct FitSummary {
  std::size_t n_samples = 0;
  std::size_t d = 0;
  double epsilon = 0.0;
};

struct SubjectFailure {
  std::string subject_id;
  std::string message;
};

struct ScoreSummary {
  std::vector<SubjectScore> scores;  // manifest order, failed subjects omitted
  std::vector<SubjectFailure> failures;
};

struct EvaluateSummary {
  DetectionReport report;
  std::vector<EvaluationRecord> records;
  std::filesystem::path report_path;
  std::filesystem::path scatter_path;
};

/// Pools every ID_TRAIN patch, fits the Gaussian and writes it to `cfg.model`.
FitSummary cmd_fit(const RunConfig& cfg);

/// Writes a mask and raw score for each ID_VAL, ID_TEST and OOD subject.
/// Subjects that fail are reported in the summary and skipped.
ScoreSummary cmd_score(const RunConfig& cfg);

/// Normalizes against ID_VAL, writes `report.<tag>.json` and
/// `scatter.<tag>.csv`, and fills `normalized_score` into each metadata file.
EvaluateSummary cmd_evaluate(const RunConfig& cfg);

/// Comparison table over report files, one row per method.
std::string cmd_report(const std::vector<std::filesystem::path>& reports);

/// Patch scores for one subject under a fitted model.
std::vector<double> score_patches(const SubjectEntry& subject, const GaussianModel& model);

}  // namespace patchood
