#include <doctest.h>

#include <nlohmann/json.hpp>

#include "expect_error.hpp"
#include "oracles.hpp"
#include "patchood/pipeline.hpp"
#include "patchood/synth.hpp"

using namespace patchood;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SmallFixture {
  oracle::TempDir dir{"pipeline"};
  SynthResult synth;
  RunConfig cfg;

  SmallFixture() {
    ShiftSpec spec;
    spec.d = 8;
    spec.n_train = 60;
    spec.n_val = 10;
    spec.n_test = 10;
    spec.n_ood = 10;
    spec.mean_shift = 5.0;
    spec.seed = 17;
    synth = generate(spec, dir / "data");
    cfg.manifest = synth.manifest_path;
    cfg.model = dir / "model.npz";
    cfg.out_dir = dir / "out";
  }
};

}  // namespace

TEST_CASE_FIXTURE(SmallFixture, "fit produces the reduced dimensionality and is reproducible") {
  const FitSummary s = cmd_fit(cfg);
  CHECK(s.d == 8);
  CHECK(s.n_samples == 240);
  CHECK(s.epsilon == 0.0);
  const std::string first = read_file(cfg.model);
  cfg.workers = 4;
  cmd_fit(cfg);
  CHECK(read_file(cfg.model) == first);
  const GaussianModel m = load_model(cfg.model);
  CHECK(m.pooling.max_elements == 16);
}

TEST_CASE_FIXTURE(SmallFixture, "fit without ID_TRAIN subjects") {
  json doc = json::parse(read_file(cfg.manifest));
  json kept = json::array();
  for (const auto& s : doc["subjects"])
    if (s["split"] != "ID_TRAIN") kept.push_back(s);
  doc["subjects"] = kept;
  const fs::path m2 = dir / "data" / "no_train.json";
  write_file(m2, doc.dump());
  cfg.manifest = m2;
  CHECK(error_code_of([&] { cmd_fit(cfg); }) == ErrorCode::TooFewSamples);
}

TEST_CASE_FIXTURE(SmallFixture, "subject whose patches sit at the mean scores zero") {
  cmd_fit(cfg);
  const GaussianModel model = load_model(cfg.model);
  // Replace one validation subject's features by the model mean.
  json doc = json::parse(read_file(cfg.manifest));
  json* target = nullptr;
  for (auto& s : doc["subjects"])
    if (s["id"] == "val_0000") target = &s;
  REQUIRE(target);
  Tensor t{DType::F64, {model.d, 1, 1, 1}, std::vector<double>(model.mu.data(), model.mu.data() + model.mu.size())};
  write_tensor(t, dir / "data" / "at_mean.npy");
  for (auto& f : (*target)["feature_files"]) f = "at_mean.npy";
  write_file(dir / "data" / "at_mean.json", doc.dump());
  cfg.manifest = dir / "data" / "at_mean.json";
  const ScoreSummary s = cmd_score(cfg);
  REQUIRE(s.failures.empty());
  CHECK(s.scores.front().subject_id == "val_0000");
  CHECK(s.scores.front().raw == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE_FIXTURE(SmallFixture, "scoring is repeatable and writes masks plus metadata") {
  cmd_fit(cfg);
  const ScoreSummary a = cmd_score(cfg);
  CHECK(a.scores.size() == 30);
  CHECK(a.failures.empty());
  const std::string mask = read_file(cfg.out_dir / "test_0003.uncertainty.npy");
  const Tensor t = read_tensor(cfg.out_dir / "test_0003.uncertainty.npy");
  CHECK(t.shape == Shape{8, 12, 12});
  const json meta = json::parse(read_file(cfg.out_dir / "test_0003.uncertainty.json"));
  CHECK(meta["normalized_score"].is_null());
  CHECK(meta["raw_score"].get<double>() > 0.0);
  cfg.workers = 3;
  const ScoreSummary b = cmd_score(cfg);
  CHECK(read_file(cfg.out_dir / "test_0003.uncertainty.npy") == mask);
  for (std::size_t i = 0; i < a.scores.size(); ++i) CHECK(a.scores[i].raw == b.scores[i].raw);
}

TEST_CASE_FIXTURE(SmallFixture, "evaluate before score names the missing subjects") {
  try {
    cmd_evaluate(cfg);
    FAIL("expected MissingScores");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingScores);
    CHECK(std::string(e.what()).find("val_0000") != std::string::npos);
  }
}

TEST_CASE_FIXTURE(SmallFixture, "Mahalanobis separates the shifted population, max softmax does not") {
  cmd_fit(cfg);
  cmd_score(cfg);
  const EvaluateSummary ours = cmd_evaluate(cfg);
  CHECK(ours.report.fpr <= 0.05);
  const json meta = json::parse(read_file(cfg.out_dir / "ood_0000.uncertainty.json"));
  CHECK(meta["normalized_score"].get<double>() == 1.0);

  cfg.method = Method::MaxSoftmax;
  cmd_score(cfg);
  const EvaluateSummary soft = cmd_evaluate(cfg);
  CHECK(soft.report.fpr >= 0.5);
  CHECK(fs::exists(cfg.out_dir / "report.max_softmax.json"));
  CHECK(fs::exists(cfg.out_dir / "test_0000.uncertainty.max_softmax.npy"));

  const std::string csv = read_file(ours.scatter_path);
  CHECK(csv.rfind("subject_id,split,method,normalized_uncertainty,dice\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);

  const std::string table = cmd_report({ours.report_path, soft.report_path});
  CHECK(table.find("| mahalanobis |") != std::string::npos);
  CHECK(table.find("| max_softmax |") != std::string::npos);
}

TEST_CASE_FIXTURE(SmallFixture, "every baseline runs on the fixture") {
  for (Method m : {Method::TempScaling, Method::KlUniform, Method::McDropout}) {
    cfg.method = m;
    cfg.temperature = 100.0;
    const ScoreSummary s = cmd_score(cfg);
    CHECK(s.failures.empty());
    const EvaluateSummary e = cmd_evaluate(cfg);
    CHECK(e.report.detection_error >= 0.0);
    CHECK(fs::exists(e.report_path));
  }
  CHECK(fs::exists(cfg.out_dir / "report.temp_scaling_T100.json"));
}

TEST_CASE_FIXTURE(SmallFixture, "a corrupt subject is skipped and reported") {
  cfg.method = Method::MaxSoftmax;
  const DatasetManifest m = load_manifest(cfg.manifest);
  fs::path victim;
  for (const auto& s : m.subjects)
    if (s.id == "test_0002") victim = *s.softmax_file;
  write_file(victim, "garbage");
  const ScoreSummary s = cmd_score(cfg);
  REQUIRE(s.failures.size() == 1);
  CHECK(s.failures[0].subject_id == "test_0002");
  CHECK(s.scores.size() == 29);
}

TEST_CASE("score without a model file") {
  oracle::TempDir dir("nomodel");
  ShiftSpec spec;
  spec.d = 4;
  spec.n_train = 3;
  spec.n_val = spec.n_test = spec.n_ood = 1;
  const SynthResult r = generate(spec, dir.path());
  RunConfig cfg;
  cfg.manifest = r.manifest_path;
  cfg.model = dir / "absent.npz";
  cfg.out_dir = dir / "out";
  CHECK(error_code_of([&] { cmd_score(cfg); }) == ErrorCode::MissingFile);
}

TEST_CASE("method names round trip") {
  for (Method m : {Method::Mahalanobis, Method::MaxSoftmax, Method::TempScaling, Method::KlUniform, Method::McDropout})
    CHECK(parse_method(to_string(m)) == m);
  CHECK(!parse_method("odin"));
  RunConfig cfg;
  cfg.method = Method::TempScaling;
  cfg.temperature = 1000;
  CHECK(method_tag(cfg) == "temp_scaling_T1000");
  CHECK(mask_stem("s1", cfg) == "s1.uncertainty.temp_scaling_T1000");
}
