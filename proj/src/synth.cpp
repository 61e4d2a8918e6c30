#include "patchood/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "patchood/aggregate.hpp"
#include "patchood/error.hpp"
#include "patchood/rng.hpp"
#include "patchood/tensorio.hpp"

namespace patchood {
namespace {

namespace fs = std::filesystem;

constexpr std::size_t kPatchesPerSubject = 4;

// Lesion box inside the (8, 12, 12) image; its corner is jittered per subject.
constexpr Index3 kLesionSize{4, 6, 6};

struct Population {
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor;  // samples are mean + factor * N(0, I)
};

Eigen::MatrixXd random_orthogonal(std::size_t d, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) q(r, c) = rng.normal();
  // Modified Gram-Schmidt, column by column.
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index p = 0; p < c; ++p) q.col(c) -= q.col(p).dot(q.col(c)) * q.col(p);
    q.col(c) /= q.col(c).norm();
  }
  return q;
}

Eigen::MatrixXd pair_rotation(std::size_t d, double angle) {
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n, n);
  const double c = std::cos(angle), s = std::sin(angle);
  for (Eigen::Index i = 0; i + 1 < n; i += 2) {
    r(i, i) = c;
    r(i, i + 1) = -s;
    r(i + 1, i) = s;
    r(i + 1, i + 1) = c;
  }
  return r;
}

Eigen::VectorXd draw(const Population& pop, Rng& rng) {
  Eigen::VectorXd g(pop.mean.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.normal();
  return pop.mean + pop.factor * g;
}

// (d, 2, 2, 2) tensor whose 2x2x2 blocks average back to z.
Tensor feature_tensor(const Eigen::VectorXd& z, Rng& rng) {
  Tensor t;
  t.dtype = DType::F32;
  t.shape = {static_cast<std::size_t>(z.size()), 2, 2, 2};
  t.data.reserve(static_cast<std::size_t>(z.size()) * 8);
  for (Eigen::Index c = 0; c < z.size(); ++c) {
    const double texture = 0.25 * rng.normal();
    for (int k = 0; k < 8; ++k) t.data.push_back(static_cast<float>(z(c) + ((k % 2) ? -texture : texture)));
  }
  return t;
}

std::size_t voxel_index(const Index3& shape, std::size_t d, std::size_t h, std::size_t w) {
  return (d * shape[1] + h) * shape[2] + w;
}

Tensor volume(std::vector<double> values, std::size_t channels = 0) {
  Tensor t;
  t.dtype = DType::F32;
  if (channels) t.shape = {channels, kSynthImageShape[0], kSynthImageShape[1], kSynthImageShape[2]};
  else t.shape = {kSynthImageShape[0], kSynthImageShape[1], kSynthImageShape[2]};
  t.data = std::move(values);
  return t;
}

std::string subject_name(const char* prefix, std::size_t i) {
  std::string num = std::to_string(i);
  if (num.size() < 4) num.insert(0, 4 - num.size(), '0');
  return std::string(prefix) + "_" + num;
}

}  // namespace

void ShiftSpec::validate() const {
  if (d == 0) throw Error(ErrorCode::InvalidArgument, "synth d must be positive");
  if (n_train == 0 || n_val == 0 || n_test == 0 || n_ood == 0)
    throw Error(ErrorCode::InvalidArgument, "synth subject counts must be positive");
  if (!(mean_shift >= 0.0) || !std::isfinite(mean_shift))
    throw Error(ErrorCode::InvalidArgument, "mean_shift must be non-negative");
  if (!std::isfinite(cov_rotation)) throw Error(ErrorCode::InvalidArgument, "cov_rotation must be finite");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
}

ShiftSpec load_shift_spec(const fs::path& path) {
  ShiftSpec spec;
  try {
    const auto doc = nlohmann::json::parse(read_file(path));
    spec.d = doc.at("d").get<std::size_t>();
    spec.n_train = doc.at("n_train").get<std::size_t>();
    spec.n_val = doc.at("n_val").get<std::size_t>();
    spec.n_test = doc.at("n_test").get<std::size_t>();
    spec.n_ood = doc.at("n_ood").get<std::size_t>();
    spec.mean_shift = doc.value("mean_shift", 0.0);
    spec.cov_rotation = doc.value("cov_rotation", 0.0);
    spec.scale = doc.value("scale", 1.0);
    spec.seed = doc.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

Eigen::MatrixXd random_covariance(std::size_t d, Rng& rng) {
  const Eigen::MatrixXd q = random_orthogonal(d, rng);
  Eigen::VectorXd lambda(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = std::pow(10.0, rng.uniform(-1.0, 1.0));
  Eigen::MatrixXd sigma = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

SynthResult generate(const ShiftSpec& spec, const fs::path& out_root) {
  spec.validate();
  const fs::path out_dir = fs::absolute(out_root).lexically_normal();
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  fs::create_directories(out_dir / "volumes", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  Rng rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.d);

  // Sigma0 = Q diag(lambda) Q^T; the sampling factor is Q diag(sqrt(lambda)).
  const Eigen::MatrixXd q = random_orthogonal(spec.d, rng);
  Eigen::VectorXd lambda(n);
  for (Eigen::Index i = 0; i < n; ++i) lambda(i) = std::pow(10.0, rng.uniform(-1.0, 1.0));
  Population id;
  id.mean.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) id.mean(i) = rng.normal();
  id.factor = q * lambda.array().sqrt().matrix().asDiagonal();
  Eigen::MatrixXd sigma0 = q * lambda.asDiagonal() * q.transpose();
  sigma0 = 0.5 * (sigma0 + sigma0.transpose());

  Eigen::VectorXd direction(n);
  for (Eigen::Index i = 0; i < n; ++i) direction(i) = rng.normal();
  direction /= direction.norm();
  const double marginal_std = std::sqrt(sigma0.trace() / static_cast<double>(spec.d));
  Population ood;
  ood.mean = id.mean + spec.mean_shift * marginal_std * direction;
  ood.factor = spec.scale * pair_rotation(spec.d, spec.cov_rotation) * id.factor;

  // Whitening for the per-subject quality signal.
  const Eigen::MatrixXd precision_factor = id.factor.inverse();

  SynthResult result;
  result.mu0 = id.mean;
  result.sigma0 = sigma0;
  DatasetManifest& m = result.manifest;
  m.patch_size = kSynthPatchSize;
  m.pooling.max_elements = 2 * spec.d;
  const PatchGrid grid = make_grid(kSynthImageShape, kSynthPatchSize, default_step(kSynthPatchSize));

  struct Group {
    const char* prefix;
    Split split;
    std::size_t count;
  };
  const Group groups[] = {{"train", Split::IdTrain, spec.n_train},
                          {"val", Split::IdVal, spec.n_val},
                          {"test", Split::IdTest, spec.n_test},
                          {"ood", Split::Ood, spec.n_ood}};
  const std::size_t voxels = kSynthImageShape[0] * kSynthImageShape[1] * kSynthImageShape[2];

  for (const auto& group : groups) {
    const Population& pop = group.split == Split::Ood ? ood : id;
    for (std::size_t s = 0; s < group.count; ++s) {
      SubjectEntry e;
      e.id = subject_name(group.prefix, s);
      e.split = group.split;
      e.image_shape = kSynthImageShape;
      e.patch_origins = grid.origins;

      double distance = 0.0;
      for (std::size_t p = 0; p < kPatchesPerSubject; ++p) {
        const Eigen::VectorXd z = draw(pop, rng);
        distance += (precision_factor * (z - id.mean)).squaredNorm();
        const fs::path file = out_dir / "features" / (e.id + "_p" + std::to_string(p) + ".npy");
        write_tensor(feature_tensor(z, rng), file);
        e.feature_files.push_back(file);
      }
      if (group.split == Split::IdTrain) {
        m.subjects.push_back(std::move(e));
        continue;
      }

      // Standardized excess distance; ~N(0,1) for ID subjects.
      distance /= static_cast<double>(kPatchesPerSubject);
      const double t = (distance - static_cast<double>(spec.d)) /
                       std::sqrt(2.0 * static_cast<double>(spec.d) / static_cast<double>(kPatchesPerSubject));
      const double quality = std::clamp(0.85 - 0.08 * t + 0.03 * rng.normal(), 0.02, 0.98);

      std::vector<double> gt(voxels, 0.0), pred(voxels, 0.0);
      const std::size_t od = static_cast<std::size_t>(rng.uniform() * (kSynthImageShape[0] - kLesionSize[0] + 1));
      const std::size_t oh = static_cast<std::size_t>(rng.uniform() * (kSynthImageShape[1] - kLesionSize[1] + 1));
      const std::size_t ow = static_cast<std::size_t>(rng.uniform() * (kSynthImageShape[2] - kLesionSize[2] + 1));
      const std::size_t lesion = kLesionSize[0] * kLesionSize[1] * kLesionSize[2];
      // A prediction strictly inside the lesion with p voxels has Dice 2p / (p + |G|).
      const auto keep = static_cast<std::size_t>(
          std::lround(quality * static_cast<double>(lesion) / (2.0 - quality)));
      std::size_t kept = 0;
      for (std::size_t d = od; d < od + kLesionSize[0]; ++d)
        for (std::size_t h = oh; h < oh + kLesionSize[1]; ++h)
          for (std::size_t w = ow; w < ow + kLesionSize[2]; ++w) {
            const std::size_t v = voxel_index(kSynthImageShape, d, h, w);
            gt[v] = 1.0;
            if (kept < keep) {
              pred[v] = 1.0;
              ++kept;
            }
          }

      // Network outputs carry no information about the feature shift.
      std::vector<double> softmax(2 * voxels), logits(2 * voxels);
      std::vector<double> foreground(voxels);
      for (std::size_t v = 0; v < voxels; ++v) {
        const double conf = rng.uniform(0.6, 0.99);
        const double p = pred[v] > 0.5 ? conf : 1.0 - conf;
        const auto pf = static_cast<double>(static_cast<float>(p));
        foreground[v] = pf;
        softmax[v] = static_cast<double>(static_cast<float>(1.0 - pf));
        softmax[voxels + v] = pf;
        logits[v] = 0.0;
        logits[voxels + v] = std::log(p / (1.0 - p));
      }

      const fs::path stem = out_dir / "volumes" / e.id;
      auto path_for = [&](const std::string& suffix) { return fs::path(stem.string() + suffix); };
      write_tensor(volume(softmax, 2), path_for("_softmax.npy"));
      write_tensor(volume(logits, 2), path_for("_logits.npy"));
      write_tensor(volume(pred), path_for("_pred.npy"));
      write_tensor(volume(gt), path_for("_gt.npy"));
      e.softmax_file = path_for("_softmax.npy");
      e.logits_file = path_for("_logits.npy");
      e.prediction_file = path_for("_pred.npy");
      e.groundtruth_file = path_for("_gt.npy");
      for (std::size_t k = 0; k < kSynthMcSamples; ++k) {
        std::vector<double> sample(voxels);
        for (std::size_t v = 0; v < voxels; ++v) sample[v] = std::clamp(foreground[v] + 0.05 * rng.normal(), 0.0, 1.0);
        const fs::path file = path_for("_mc" + std::to_string(k) + ".npy");
        write_tensor(volume(std::move(sample)), file);
        e.mc_sample_files.push_back(file);
      }
      m.subjects.push_back(std::move(e));
    }
  }

  result.manifest_path = out_dir / "manifest.json";
  save_manifest(m, result.manifest_path);
  return result;
}

}  // namespace patchood
