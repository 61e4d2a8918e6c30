// Command-line front end: synth | fit | score | evaluate | report.
//
// Every option can also be set through an environment variable named
// PATCHOOD_<OPTION>, e.g. PATCHOOD_MANIFEST or PATCHOOD_WORKERS.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "patchood/error.hpp"
#include "patchood/pipeline.hpp"
#include "patchood/synth.hpp"
#include "patchood/tensorio.hpp"

namespace {

using patchood::Method;

const std::map<std::string, Method> kMethods = {
    {"mahalanobis", Method::Mahalanobis}, {"max_softmax", Method::MaxSoftmax}, {"temp_scaling", Method::TempScaling},
    {"kl_uniform", Method::KlUniform},    {"mc_dropout", Method::McDropout},
};

const std::map<std::string, patchood::KlInversion> kKlInversions = {
    {"affine", patchood::KlInversion::Affine},
    {"negate", patchood::KlInversion::Negate},
};

std::string g_method = "mahalanobis";
std::string g_kl_inversion = "affine";

void add_manifest(CLI::App* cmd, patchood::RunConfig& cfg) {
  cmd->add_option("--manifest", cfg.manifest, "Dataset manifest (JSON)")->required()->envname("PATCHOOD_MANIFEST");
}

void add_model(CLI::App* cmd, patchood::RunConfig& cfg, bool required) {
  auto* opt = cmd->add_option("--model", cfg.model, "Gaussian model file")->envname("PATCHOOD_MODEL");
  if (required) opt->required();
}

void add_method(CLI::App* cmd, patchood::RunConfig& cfg) {
  cmd->add_option("--method", g_method, "Uncertainty estimator")
      ->check(CLI::IsMember(kMethods, CLI::ignore_case))
      ->envname("PATCHOOD_METHOD");
  cmd->add_option("--temperature", cfg.temperature, "Softmax temperature for temp_scaling")
      ->check(CLI::PositiveNumber)
      ->envname("PATCHOOD_TEMPERATURE");
  cmd->add_option("--kl-invert", g_kl_inversion, "Confidence-to-uncertainty map for kl_uniform")
      ->check(CLI::IsMember(kKlInversions, CLI::ignore_case))
      ->envname("PATCHOOD_KL_INVERT");
}

void add_out_workers(CLI::App* cmd, patchood::RunConfig& cfg) {
  cmd->add_option("--out", cfg.out_dir, "Output directory")->required()->envname("PATCHOOD_OUT");
  cmd->add_option("--workers", cfg.workers, "Parallel subject workers")
      ->check(CLI::PositiveNumber)
      ->envname("PATCHOOD_WORKERS");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-space Mahalanobis OOD detection for patch-based segmentation"};
  app.require_subcommand(1);

  patchood::RunConfig cfg;
  cfg.log = &std::cerr;

  patchood::ShiftSpec spec;
  std::filesystem::path spec_path;
  std::optional<std::uint64_t> seed;
  std::filesystem::path synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a controlled distribution shift");
  synth->add_option("--spec", spec_path, "Shift specification (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required()->envname("PATCHOOD_OUT");
  synth->add_option("--seed", seed, "Override the spec's seed")->envname("PATCHOOD_SEED");

  auto* fit = app.add_subcommand("fit", "Fit the training-feature Gaussian");
  add_manifest(fit, cfg);
  add_model(fit, cfg, true);
  fit->add_option("--workers", cfg.workers, "Parallel subject workers")->check(CLI::PositiveNumber)->envname("PATCHOOD_WORKERS");

  auto* score = app.add_subcommand("score", "Write uncertainty masks and raw subject scores");
  add_manifest(score, cfg);
  add_model(score, cfg, false);
  add_method(score, cfg);
  score->add_option("--sigma-scale", cfg.sigma_scale, "Center-weight sigma as a fraction of patch size")
      ->check(CLI::PositiveNumber)
      ->envname("PATCHOOD_SIGMA_SCALE");
  add_out_workers(score, cfg);

  auto* evaluate = app.add_subcommand("evaluate", "Normalize scores and compute detection and calibration metrics");
  add_manifest(evaluate, cfg);
  add_method(evaluate, cfg);
  evaluate->add_option("--target-tpr", cfg.target_tpr, "ID validation TPR defining the boundary")
      ->check(CLI::Range(0.0, 1.0))
      ->envname("PATCHOOD_TARGET_TPR");
  evaluate->add_option("--bins", cfg.bins, "ESCE bin count")->check(CLI::PositiveNumber)->envname("PATCHOOD_BINS");
  evaluate->add_option("--sigma-scale", cfg.sigma_scale, "Recorded in the report's config hash")
      ->check(CLI::PositiveNumber)
      ->envname("PATCHOOD_SIGMA_SCALE");
  add_out_workers(evaluate, cfg);

  std::vector<std::filesystem::path> reports;
  std::filesystem::path report_out;
  auto* report = app.add_subcommand("report", "Tabulate several report JSON files");
  report->add_option("reports", reports, "Report files written by evaluate")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "Also write the table to this file");

  CLI11_PARSE(app, argc, argv);
  cfg.method = kMethods.at(CLI::detail::to_lower(g_method));
  cfg.kl_inversion = kKlInversions.at(CLI::detail::to_lower(g_kl_inversion));

  try {
    if (*synth) {
      spec = patchood::load_shift_spec(spec_path);
      if (seed) spec.seed = *seed;
      const auto result = patchood::generate(spec, synth_out);
      std::cerr << "synth: wrote " << result.manifest.subjects.size() << " subjects to "
                << result.manifest_path.string() << '\n';
    } else if (*fit) {
      patchood::cmd_fit(cfg);
    } else if (*score) {
      const auto summary = patchood::cmd_score(cfg);
      if (!summary.failures.empty()) {
        std::cerr << "score: " << summary.failures.size() << " subject(s) failed\n";
        return 2;
      }
    } else if (*evaluate) {
      const auto summary = patchood::cmd_evaluate(cfg);
      std::cout << summary.report_path.string() << '\n' << summary.scatter_path.string() << '\n';
    } else if (*report) {
      const std::string table = patchood::cmd_report(reports);
      std::cout << table;
      if (!report_out.empty()) patchood::write_file(report_out, table);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
