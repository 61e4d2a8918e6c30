#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "oracles.hpp"
#include "patchood/pipeline.hpp"
#include "patchood/synth.hpp"

using namespace patchood;
namespace fs = std::filesystem;

namespace {

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("same seed gives byte-identical output; generated manifest validates") {
  oracle::TempDir a("synth_a"), b("synth_b");
  ShiftSpec spec;
  spec.d = 6;
  spec.n_train = 5;
  spec.n_val = 2;
  spec.n_test = 2;
  spec.n_ood = 2;
  spec.mean_shift = 2.0;
  spec.cov_rotation = 0.3;
  spec.scale = 1.5;
  spec.seed = 99;
  const SynthResult ra = generate(spec, a.path());
  generate(spec, b.path());
  const auto fa = files_under(a.path());
  REQUIRE(fa == files_under(b.path()));
  for (const auto& f : fa) CHECK(read_file(a.path() / f) == read_file(b.path() / f));

  const DatasetManifest m = load_manifest(ra.manifest_path);
  CHECK(m.subjects.size() == 11);
  CHECK(m.subjects.front().feature_files.size() == 4);
  CHECK(m.subjects.back().mc_sample_files.size() == kSynthMcSamples);
  CHECK(reduced_dimension(6, {2, 2, 2}, m.pooling) == 6);

  spec.seed = 100;
  oracle::TempDir c("synth_c");
  generate(spec, c.path());
  CHECK(read_file(a.path() / "features/train_0000_p0.npy") != read_file(c.path() / "features/train_0000_p0.npy"));
}

TEST_CASE("Sigma0 is well conditioned") {
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd s = random_covariance(20, rng);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues();
    CHECK(ev.minCoeff() >= 0.1 - 1e-9);
    CHECK(ev.maxCoeff() <= 10.0 + 1e-9);
    CHECK(ev.maxCoeff() / ev.minCoeff() <= 100.0 + 1e-6);
  }
}

TEST_CASE("no-shift null case: Mahalanobis AUROC near 0.5") {
  oracle::TempDir dir("synth_null");
  ShiftSpec spec;
  spec.d = 8;
  spec.n_train = 200;
  spec.n_val = 10;
  spec.n_test = 500;
  spec.n_ood = 500;
  spec.seed = 5;
  const SynthResult r = generate(spec, dir.path());
  RunConfig cfg;
  cfg.manifest = r.manifest_path;
  cfg.model = dir / "model.npz";
  cfg.out_dir = dir / "scores";
  cmd_fit(cfg);
  const ScoreSummary s = cmd_score(cfg);
  REQUIRE(s.failures.empty());
  const DatasetManifest m = load_manifest(r.manifest_path);
  std::vector<double> id, ood;
  for (std::size_t i = 0, k = 0; i < m.subjects.size(); ++i) {
    if (m.subjects[i].split == Split::IdTrain) continue;
    const double raw = s.scores[k++].raw;
    if (m.subjects[i].split == Split::IdTest) id.push_back(raw);
    if (m.subjects[i].split == Split::Ood) ood.push_back(raw);
  }
  const double auc = oracle::auroc(id, ood);
  CHECK(auc >= 0.4);
  CHECK(auc <= 0.6);
}

TEST_CASE("ground-truth quality tracks feature-space distance") {
  oracle::TempDir dir("synth_quality");
  ShiftSpec spec;
  spec.d = 16;
  spec.n_train = 300;
  spec.n_val = 20;
  spec.n_test = 60;
  spec.n_ood = 60;
  spec.mean_shift = 2.0;
  spec.seed = 8;
  const SynthResult r = generate(spec, dir.path());
  RunConfig cfg;
  cfg.manifest = r.manifest_path;
  cfg.model = dir / "model.npz";
  cfg.out_dir = dir / "scores";
  cmd_fit(cfg);
  cmd_score(cfg);
  const EvaluateSummary e = cmd_evaluate(cfg);
  std::vector<double> u, d;
  for (const auto& rec : e.records) {
    REQUIRE(rec.dice);
    u.push_back(rec.normalized_uncertainty);
    d.push_back(*rec.dice);
  }
  CHECK(oracle::spearman(u, d) <= -0.7);
}
