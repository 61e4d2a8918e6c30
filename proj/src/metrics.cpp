#include "patchood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "patchood/error.hpp"

namespace patchood {
namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double tpr_boundary(std::span<const double> id_val_scores, double target_tpr) {
  if (id_val_scores.empty()) throw Error(ErrorCode::EmptyInput, "no ID validation scores");
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) throw Error(ErrorCode::InvalidArgument, "target TPR must lie in (0, 1]");
  std::vector<double> sorted(id_val_scores.begin(), id_val_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  // Smallest rank k with k/n >= target; the slack absorbs products like 0.95*20.
  auto rank = static_cast<std::size_t>(std::ceil(target_tpr * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

double admitted_fraction(std::span<const double> scores, double boundary) {
  if (scores.empty()) throw Error(ErrorCode::EmptyInput, "no scores");
  const auto admitted = std::count_if(scores.begin(), scores.end(), [&](double s) { return s <= boundary; });
  return static_cast<double>(admitted) / static_cast<double>(scores.size());
}

double detection_error(double tpr, double fpr) { return 0.5 * (1.0 - tpr) + 0.5 * fpr; }

double fpr_at_boundary(std::span<const double> ood_scores, double boundary) {
  if (ood_scores.empty()) throw Error(ErrorCode::EmptyInput, "no OOD scores");
  return admitted_fraction(ood_scores, boundary);
}

double dice(std::span<const bool> pred, std::span<const bool> gt) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and ground truth differ in size");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p += pred[i];
    g += gt[i];
    both += pred[i] && gt[i];
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double dice(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and ground truth differ in size");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] > 0.5, b = gt[i] > 0.5;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double esce(std::span<const EvaluationRecord> records, int bins) {
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bin count must be >= 1");
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no records to calibrate");
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  std::vector<double> dice_sum(count.size(), 0.0);
  std::vector<double> unc_sum(count.size(), 0.0);
  for (const auto& r : records) {
    if (!r.dice) throw Error(ErrorCode::MissingDice, "record " + r.subject_id + " has no Dice value");
    const double u = std::clamp(r.normalized_uncertainty, 0.0, 1.0);
    const auto bin = std::min(static_cast<std::size_t>(u * bins), count.size() - 1);
    ++count[bin];
    dice_sum[bin] += *r.dice;
    unc_sum[bin] += u;
  }
  const auto n = static_cast<double>(records.size());
  double total = 0.0;
  for (std::size_t m = 0; m < count.size(); ++m) {
    if (count[m] == 0) continue;
    const auto size = static_cast<double>(count[m]);
    total += size / n * std::abs(dice_sum[m] / size - (1.0 - unc_sum[m] / size));
  }
  return total;
}

DetectionReport evaluate(std::span<const EvaluationRecord> records, std::span<const double> id_val_scores,
                         double target_tpr, int bins) {
  std::vector<double> test, ood;
  std::vector<EvaluationRecord> evaluated;
  for (const auto& r : records) {
    if (!std::isfinite(r.normalized_uncertainty))
      throw Error(ErrorCode::NonFiniteInput, "record " + r.subject_id + " has a non-finite uncertainty");
    if (r.split == Split::IdTest) test.push_back(r.normalized_uncertainty);
    if (r.split == Split::Ood) ood.push_back(r.normalized_uncertainty);
    if (r.split == Split::IdTest || r.split == Split::Ood) evaluated.push_back(r);
  }
  if (test.empty()) throw Error(ErrorCode::EmptyInput, "evaluation needs at least one ID_TEST record");
  if (ood.empty()) throw Error(ErrorCode::EmptyInput, "evaluation needs at least one OOD record");

  DetectionReport rep;
  rep.n_val = id_val_scores.size();
  rep.n_test = test.size();
  rep.n_ood = ood.size();
  rep.boundary = tpr_boundary(id_val_scores, target_tpr);
  rep.tpr_val = admitted_fraction(id_val_scores, rep.boundary);
  rep.tpr_test = admitted_fraction(test, rep.boundary);
  rep.fpr = fpr_at_boundary(ood, rep.boundary);
  rep.detection_error = detection_error(rep.tpr_test, rep.fpr);

  const bool all_have_dice =
      std::all_of(evaluated.begin(), evaluated.end(), [](const EvaluationRecord& r) { return r.dice.has_value(); });
  if (all_have_dice) rep.esce = esce(evaluated, bins);

  std::vector<double> admitted;
  for (const auto& r : evaluated)
    if (r.normalized_uncertainty <= rep.boundary && r.dice) admitted.push_back(*r.dice);
  rep.n_admitted = admitted.size();
  if (!admitted.empty()) {
    double mean = 0.0;
    for (double v : admitted) mean += v;
    mean /= static_cast<double>(admitted.size());
    double ss = 0.0;
    for (double v : admitted) ss += (v - mean) * (v - mean);
    rep.admitted_dice_mean = mean;
    rep.admitted_dice_sd = std::sqrt(ss / static_cast<double>(admitted.size()));
  }
  return rep;
}

std::string scatter_csv(std::span<const EvaluationRecord> records, std::string_view method) {
  std::string out = "subject_id,split,method,normalized_uncertainty,dice\n";
  for (const auto& r : records) {
    out += r.subject_id;
    out += ',';
    out += to_string(r.split);
    out += ',';
    out += method;
    out += ',';
    out += format_real(r.normalized_uncertainty);
    out += ',';
    if (r.dice) out += format_real(*r.dice);
    out += '\n';
  }
  return out;
}

}  // namespace patchood
