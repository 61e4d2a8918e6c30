#include "patchood/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "patchood/error.hpp"

namespace patchood {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
// captured per index; callers decide whether they are fatal.
std::vector<std::exception_ptr> parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (threads <= 1) {
    run();
    return errors;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run);
  return errors;
}

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

void log_line(const RunConfig& cfg, const std::string& line) {
  if (cfg.log) *cfg.log << line << '\n';
}

std::string format_real(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool scored_split(Split s) { return s != Split::IdTrain; }

fs::path metadata_path(const RunConfig& cfg, const std::string& id) {
  return cfg.out_dir / (mask_stem(id, cfg) + ".json");
}

Tensor mask_tensor(const UncertaintyMask& mask) {
  Tensor t;
  t.dtype = DType::F32;
  t.shape = {mask.shape[0], mask.shape[1], mask.shape[2]};
  t.data = mask.values;
  return t;
}

UncertaintyMask subject_mask(const SubjectEntry& s, const DatasetManifest& manifest, const RunConfig& cfg,
                             const GaussianModel* model) {
  UncertaintyMask mask;
  auto require = [&](bool present, const char* what) {
    if (!present)
      throw Error(ErrorCode::MissingFile, "subject " + s.id + " has no " + what + " for method " +
                                              std::string(to_string(cfg.method)));
  };
  switch (cfg.method) {
    case Method::Mahalanobis: {
      require(!s.feature_files.empty(), "feature_files");
      PatchGrid grid{s.image_shape, manifest.patch_size, default_step(manifest.patch_size), s.patch_origins};
      const auto scores = score_patches(s, *model);
      mask = build_uncertainty_mask(grid, scores, make_filter(manifest.patch_size, cfg.sigma_scale));
      break;
    }
    case Method::MaxSoftmax:
      require(s.softmax_file.has_value(), "softmax_file");
      mask = max_softmax_uncertainty(SoftmaxVolume::from_tensor(read_tensor(*s.softmax_file)));
      break;
    case Method::TempScaling:
      require(s.logits_file.has_value(), "logits_file");
      mask = temp_scaled_uncertainty(LogitVolume::from_tensor(read_tensor(*s.logits_file)), cfg.temperature);
      break;
    case Method::KlUniform:
      require(s.softmax_file.has_value(), "softmax_file");
      mask = kl_from_uniform_uncertainty(SoftmaxVolume::from_tensor(read_tensor(*s.softmax_file)), cfg.kl_inversion);
      break;
    case Method::McDropout: {
      require(!s.mc_sample_files.empty(), "mc_sample_files");
      std::vector<Tensor> samples;
      for (const auto& f : s.mc_sample_files) samples.push_back(read_tensor(f));
      mask = mc_dropout_uncertainty(McSampleSet::from_tensors(samples));
      break;
    }
  }
  if (mask.shape != s.image_shape)
    throw Error(ErrorCode::ShapeMismatch, "subject " + s.id + ": uncertainty volume does not match image_shape");
  return mask;
}

std::optional<double> subject_dice(const SubjectEntry& s) {
  if (!s.prediction_file || !s.groundtruth_file) return std::nullopt;
  const Tensor pred = read_tensor(*s.prediction_file);
  const Tensor gt = read_tensor(*s.groundtruth_file);
  if (pred.shape != gt.shape)
    throw Error(ErrorCode::ShapeMismatch, "subject " + s.id + ": prediction and ground truth differ in shape");
  return dice(std::span<const double>(pred.data), std::span<const double>(gt.data));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string config_hash(const RunConfig& cfg) {
  json c = {
      {"method", method_tag(cfg)},
      {"sigma_scale", cfg.sigma_scale},
      {"target_tpr", cfg.target_tpr},
      {"bins", cfg.bins},
      {"kl_inversion", cfg.kl_inversion == KlInversion::Affine ? "affine" : "negate"},
      {"manifest", hex64(fnv1a(read_file(cfg.manifest)))},
  };
  return hex64(fnv1a(c.dump()));
}

}  // namespace

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Mahalanobis: return "mahalanobis";
    case Method::MaxSoftmax: return "max_softmax";
    case Method::TempScaling: return "temp_scaling";
    case Method::KlUniform: return "kl_uniform";
    case Method::McDropout: return "mc_dropout";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view s) noexcept {
  for (auto m : {Method::Mahalanobis, Method::MaxSoftmax, Method::TempScaling, Method::KlUniform, Method::McDropout})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

std::string method_tag(const RunConfig& cfg) {
  std::string tag(to_string(cfg.method));
  if (cfg.method == Method::TempScaling) tag += "_T" + format_real(cfg.temperature, "%g");
  if (cfg.method == Method::KlUniform && cfg.kl_inversion == KlInversion::Negate) tag += "_negate";
  return tag;
}

std::string mask_stem(const std::string& subject_id, const RunConfig& cfg) {
  if (cfg.method == Method::Mahalanobis) return subject_id + ".uncertainty";
  return subject_id + ".uncertainty." + method_tag(cfg);
}

std::vector<double> score_patches(const SubjectEntry& subject, const GaussianModel& model) {
  std::vector<double> scores;
  scores.reserve(subject.feature_files.size());
  for (const auto& file : subject.feature_files) {
    const PooledFeature z = reduce_to_vector(FeatureTensor::from_tensor(read_tensor(file)), model.pooling);
    scores.push_back(mahalanobis(z, model).value);
  }
  return scores;
}

FitSummary cmd_fit(const RunConfig& cfg) {
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  std::vector<const SubjectEntry*> train;
  for (const auto& s : manifest.subjects)
    if (s.split == Split::IdTrain) train.push_back(&s);

  std::vector<std::vector<PooledFeature>> pooled(train.size());
  const auto errors = parallel_for(train.size(), cfg.workers, [&](std::size_t i) {
    for (const auto& file : train[i]->feature_files)
      pooled[i].push_back(reduce_to_vector(FeatureTensor::from_tensor(read_tensor(file)), manifest.pooling));
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<PooledFeature> samples;
  for (auto& subject : pooled)
    for (auto& z : subject) samples.push_back(std::move(z));
  const GaussianModel model = fit_gaussian(samples, manifest.pooling);
  if (cfg.model.has_parent_path()) fs::create_directories(cfg.model.parent_path());
  save_model(model, cfg.model);
  log_line(cfg, "fit: N=" + std::to_string(model.n_samples) + " d=" + std::to_string(model.d) +
                    " epsilon=" + format_real(model.epsilon, "%g"));
  return FitSummary{model.n_samples, model.d, model.epsilon};
}

ScoreSummary cmd_score(const RunConfig& cfg) {
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  std::optional<GaussianModel> model;
  if (cfg.method == Method::Mahalanobis) {
    if (!fs::is_regular_file(cfg.model)) throw Error(ErrorCode::MissingFile, "model file not found: " + cfg.model.string());
    model = load_model(cfg.model);
  }
  fs::create_directories(cfg.out_dir);

  std::vector<const SubjectEntry*> subjects;
  for (const auto& s : manifest.subjects)
    if (scored_split(s.split)) subjects.push_back(&s);

  std::vector<SubjectScore> scores(subjects.size());
  const auto errors = parallel_for(subjects.size(), cfg.workers, [&](std::size_t i) {
    const SubjectEntry& s = *subjects[i];
    const UncertaintyMask mask = subject_mask(s, manifest, cfg, model ? &*model : nullptr);
    const double raw = subject_score(mask);
    const std::string stem = mask_stem(s.id, cfg);
    write_tensor(mask_tensor(mask), cfg.out_dir / (stem + ".npy"));
    json meta = {{"subject_id", s.id},
                 {"split", std::string(to_string(s.split))},
                 {"method", method_tag(cfg)},
                 {"raw_score", raw},
                 {"normalized_score", nullptr}};
    write_file(cfg.out_dir / (stem + ".json"), meta.dump(2) + "\n");
    scores[i] = SubjectScore{s.id, raw, 0.0};
  });

  ScoreSummary summary;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (errors[i]) {
      summary.failures.push_back({subjects[i]->id, describe(errors[i])});
      log_line(cfg, "score: " + subjects[i]->id + " failed: " + summary.failures.back().message);
    } else {
      summary.scores.push_back(scores[i]);
    }
  }
  log_line(cfg, "score: " + std::to_string(summary.scores.size()) + " subjects scored with " + method_tag(cfg) + ", " +
                    std::to_string(summary.failures.size()) + " failed");
  return summary;
}

EvaluateSummary cmd_evaluate(const RunConfig& cfg) {
  const DatasetManifest manifest = load_manifest(cfg.manifest);

  std::vector<const SubjectEntry*> subjects;
  std::vector<std::string> missing;
  for (const auto& s : manifest.subjects) {
    if (!scored_split(s.split)) continue;
    subjects.push_back(&s);
    if (!fs::is_regular_file(metadata_path(cfg, s.id))) missing.push_back(s.id);
  }
  if (!missing.empty()) {
    std::string names;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) names += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) names += ", ... (" + std::to_string(missing.size()) + " total)";
    throw Error(ErrorCode::MissingScores, "no " + method_tag(cfg) + " scores for: " + names);
  }

  std::vector<json> metas(subjects.size());
  std::vector<std::optional<double>> dices(subjects.size());
  const auto errors = parallel_for(subjects.size(), cfg.workers, [&](std::size_t i) {
    metas[i] = json::parse(read_file(metadata_path(cfg, subjects[i]->id)));
    dices[i] = subject_dice(*subjects[i]);
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<SubjectScore> raw(subjects.size());
  std::vector<double> val_raw;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& score = metas[i].at("raw_score");
    if (!score.is_number())
      throw Error(ErrorCode::SchemaError, metadata_path(cfg, subjects[i]->id).string() + ": raw_score is not a number");
    raw[i] = SubjectScore{subjects[i]->id, score.get<double>(), 0.0};
    if (subjects[i]->split == Split::IdVal) val_raw.push_back(raw[i].raw);
  }
  if (val_raw.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no ID_VAL subjects to normalize against");
  const auto normalized = normalize_scores(raw, val_raw);

  EvaluateSummary out;
  std::vector<double> val_norm;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    out.records.push_back({subjects[i]->id, subjects[i]->split, normalized[i].normalized, dices[i]});
    if (subjects[i]->split == Split::IdVal) val_norm.push_back(normalized[i].normalized);
  }
  out.report = evaluate(out.records, val_norm, cfg.target_tpr, cfg.bins);

  for (std::size_t i = 0; i < subjects.size(); ++i) {
    metas[i]["normalized_score"] = normalized[i].normalized;
    write_file(metadata_path(cfg, subjects[i]->id), metas[i].dump(2) + "\n");
  }

  const std::string tag = method_tag(cfg);
  const DetectionReport& r = out.report;
  json report = {
      {"method", tag},
      {"config_hash", config_hash(cfg)},
      {"boundary", r.boundary},
      {"tpr_val", r.tpr_val},
      {"tpr_test", r.tpr_test},
      {"fpr", r.fpr},
      {"detection_error", r.detection_error},
      {"esce", optional_json(r.esce)},
      {"admitted_dice_mean", optional_json(r.admitted_dice_mean)},
      {"admitted_dice_sd", optional_json(r.admitted_dice_sd)},
      {"n_val", r.n_val},
      {"n_test", r.n_test},
      {"n_ood", r.n_ood},
      {"n_admitted", r.n_admitted},
      {"target_tpr", cfg.target_tpr},
      {"bins", cfg.bins},
  };
  fs::create_directories(cfg.out_dir);
  out.report_path = cfg.out_dir / ("report." + tag + ".json");
  out.scatter_path = cfg.out_dir / ("scatter." + tag + ".csv");
  write_file(out.report_path, report.dump(2) + "\n");
  std::vector<EvaluationRecord> evaluated;
  for (const auto& rec : out.records)
    if (rec.split != Split::IdVal) evaluated.push_back(rec);
  write_file(out.scatter_path, scatter_csv(evaluated, tag));
  log_line(cfg, "evaluate: " + tag + " fpr=" + format_real(r.fpr, "%.3f") + " detection_error=" +
                    format_real(r.detection_error, "%.3f"));
  return out;
}

std::string cmd_report(const std::vector<fs::path>& reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no report files given");
  auto cell = [](const json& v, const char* fmt = "%.3f") {
    return v.is_number() ? format_real(v.get<double>(), fmt) : std::string("n/a");
  };
  struct Row {
    std::string method, det, fpr, esce, dice;
  };
  std::vector<Row> rows;
  for (const auto& path : reports) {
    json r;
    try {
      r = json::parse(read_file(path));
      Row row{r.at("method").get<std::string>(), cell(r.at("detection_error")), cell(r.at("fpr")), cell(r.value("esce", json())),
              "n/a"};
      const json mean = r.value("admitted_dice_mean", json());
      const json sd = r.value("admitted_dice_sd", json());
      if (mean.is_number() && sd.is_number()) row.dice = cell(mean) + " ± " + cell(sd);
      rows.push_back(std::move(row));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
    }
  }
  std::string out = "| Method | Det. Error | FPR | ESCE | Dice |\n|---|---|---|---|---|\n";
  for (const auto& row : rows)
    out += "| " + row.method + " | " + row.det + " | " + row.fpr + " | " + row.esce + " | " + row.dice + " |\n";
  return out;
}

}  // namespace patchood
