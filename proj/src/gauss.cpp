#include "patchood/gauss.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "patchood/archive.hpp"
#include "patchood/error.hpp"
#include "patchood/tensorio.hpp"

namespace patchood {
namespace {

// Pivots below this fraction of the mean variance count as a failed
// factorization; Eigen alone accepts any positive pivot, including rounding noise.
constexpr double kPivotTolerance = 1e-12;

bool try_cholesky(const Eigen::MatrixXd& a, double scale, Eigen::MatrixXd& out) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  Eigen::MatrixXd l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const double pivot = l(i, i) * l(i, i);
    if (!std::isfinite(pivot) || pivot <= kPivotTolerance * scale) return false;
  }
  out = std::move(l);
  return true;
}

void check_dimension(std::size_t got, const GaussianModel& m) {
  if (got != m.d)
    throw Error(ErrorCode::DimensionMismatch,
                "feature has dimension " + std::to_string(got) + ", model expects " + std::to_string(m.d));
}

Tensor vector_tensor(const Eigen::VectorXd& v) {
  Tensor t;
  t.shape = {static_cast<std::size_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

Tensor matrix_tensor(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  t.data.resize(t.shape[0] * t.shape[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return t;
}

Eigen::MatrixXd tensor_matrix(const Tensor& t, std::size_t d, const char* name) {
  if (t.shape.size() != 2 || t.shape[0] != d || t.shape[1] != d)
    throw Error(ErrorCode::SchemaError, std::string("model member ") + name + " has the wrong shape");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.data[r * d + c];
  return m;
}

}  // namespace

Eigen::MatrixXd regularized_cholesky(const Eigen::MatrixXd& sigma, double& epsilon) {
  const auto d = sigma.rows();
  const double mean_var = sigma.trace() / static_cast<double>(d);
  const double scale = mean_var > 0.0 ? mean_var : 1.0;
  Eigen::MatrixXd chol;
  epsilon = 0.0;
  if (try_cholesky(sigma, scale, chol)) return chol;
  // An all-zero covariance has no trace to scale the ridge by.
  epsilon = 1e-6 * scale;
  for (int attempt = 0; attempt < kMaxRidgeRetries; ++attempt, epsilon *= 10.0) {
    Eigen::MatrixXd ridged = sigma;
    ridged.diagonal().array() += epsilon;
    if (try_cholesky(ridged, scale, chol)) return chol;
  }
  throw Error(ErrorCode::FactorizationFailure,
              "covariance is not positive definite after " + std::to_string(kMaxRidgeRetries) + " ridge retries");
}

GaussianModel fit_gaussian(std::span<const PooledFeature> samples, const PoolingConfig& pooling) {
  if (samples.size() < 2)
    throw Error(ErrorCode::TooFewSamples, "need at least 2 samples, got " + std::to_string(samples.size()));
  const std::size_t d = samples.front().d();
  if (d == 0) throw Error(ErrorCode::DimensionMismatch, "samples are empty");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].d() != d)
      throw Error(ErrorCode::DimensionMismatch, "sample " + std::to_string(i) + " has dimension " +
                                                    std::to_string(samples[i].d()) + ", expected " + std::to_string(d));
    for (double v : samples[i].values)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "sample " + std::to_string(i) + " is not finite");
  }

  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto dim = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd centered(dim, n);
  for (Eigen::Index j = 0; j < n; ++j)
    centered.col(j) = Eigen::Map<const Eigen::VectorXd>(samples[static_cast<std::size_t>(j)].values.data(), dim);

  GaussianModel m;
  m.d = d;
  m.n_samples = samples.size();
  m.pooling = pooling;
  m.mu = centered.rowwise().sum() / static_cast<double>(n);
  centered.colwise() -= m.mu;
  m.sigma = Eigen::MatrixXd::Zero(dim, dim);
  m.sigma.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(n));
  m.sigma.triangularView<Eigen::StrictlyUpper>() = m.sigma.transpose();
  m.chol = regularized_cholesky(m.sigma, m.epsilon);
  return m;
}

MahalanobisScore mahalanobis(std::span<const double> z, const GaussianModel& m) {
  check_dimension(z.size(), m);
  Eigen::VectorXd diff = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size())) - m.mu;
  if (!diff.allFinite()) throw Error(ErrorCode::NonFiniteInput, "feature is not finite");
  m.chol.triangularView<Eigen::Lower>().solveInPlace(diff);
  return MahalanobisScore{diff.squaredNorm()};
}

double euclidean_sq(std::span<const double> z, const GaussianModel& m) {
  check_dimension(z.size(), m);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double diff = z[i] - m.mu[static_cast<Eigen::Index>(i)];
    sum += diff * diff;
  }
  return sum;
}

void save_model(const GaussianModel& m, const std::filesystem::path& path) {
  nlohmann::json meta = {
      {"d", m.d},
      {"epsilon", m.epsilon},
      {"n_samples", m.n_samples},
      {"pooling", {{"kernel", m.pooling.kernel}, {"stride", m.pooling.stride}, {"max_elements", m.pooling.max_elements}}},
  };
  write_archive(path, {
                          {"mu.npy", encode_tensor(vector_tensor(m.mu))},
                          {"sigma.npy", encode_tensor(matrix_tensor(m.sigma))},
                          {"chol.npy", encode_tensor(matrix_tensor(m.chol))},
                          {"meta.json", meta.dump(2) + "\n"},
                      });
}

GaussianModel load_model(const std::filesystem::path& path) {
  const ArchiveMembers members = read_archive(path);
  auto member = [&](const std::string& name) -> const std::string& {
    for (const auto& [n, data] : members)
      if (n == name) return data;
    throw Error(ErrorCode::SchemaError, path.string() + ": model lacks member " + name);
  };

  GaussianModel m;
  try {
    const auto meta = nlohmann::json::parse(member("meta.json"));
    m.d = meta.at("d").get<std::size_t>();
    m.epsilon = meta.at("epsilon").get<double>();
    m.n_samples = meta.at("n_samples").get<std::size_t>();
    const auto& pooling = meta.at("pooling");
    m.pooling.kernel = pooling.at("kernel").get<Index3>();
    m.pooling.stride = pooling.at("stride").get<Index3>();
    m.pooling.max_elements = pooling.at("max_elements").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": bad model metadata: " + e.what());
  }
  m.pooling.validate();

  const Tensor mu = decode_tensor(member("mu.npy"), "mu.npy");
  if (mu.shape.size() != 1 || mu.shape[0] != m.d)
    throw Error(ErrorCode::SchemaError, path.string() + ": model member mu has the wrong shape");
  m.mu = Eigen::Map<const Eigen::VectorXd>(mu.data.data(), static_cast<Eigen::Index>(m.d));
  m.sigma = tensor_matrix(decode_tensor(member("sigma.npy"), "sigma.npy"), m.d, "sigma");
  m.chol = tensor_matrix(decode_tensor(member("chol.npy"), "chol.npy"), m.d, "chol");
  return m;
}

}  // namespace patchood
