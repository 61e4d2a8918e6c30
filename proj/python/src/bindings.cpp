#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "patchood/aggregate.hpp"
#include "patchood/baselines.hpp"
#include "patchood/error.hpp"
#include "patchood/gauss.hpp"
#include "patchood/metrics.hpp"
#include "patchood/pipeline.hpp"
#include "patchood/reduce.hpp"
#include "patchood/synth.hpp"
#include "patchood/tensorio.hpp"

namespace py = pybind11;
using namespace patchood;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const py::array& a) {
  Tensor t;
  t.dtype = a.dtype().is(py::dtype::of<float>()) ? DType::F32 : DType::F64;
  const DoubleArray d = DoubleArray::ensure(a);
  if (!d) throw Error(ErrorCode::UnsupportedDtype, "array is not convertible to float64");
  for (py::ssize_t i = 0; i < d.ndim(); ++i) t.shape.push_back(static_cast<std::size_t>(d.shape(i)));
  t.data.assign(d.data(), d.data() + d.size());
  return t;
}

py::array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  if (t.dtype == DType::F32) {
    py::array_t<float> out(shape);
    float* p = out.mutable_data();
    for (std::size_t i = 0; i < t.data.size(); ++i) p[i] = static_cast<float>(t.data[i]);
    return out;
  }
  py::array_t<double> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

py::array_t<double> mask_array(const UncertaintyMask& m) {
  py::array_t<double> out({m.shape[0], m.shape[1], m.shape[2]});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

py::array_t<double> vector_array(const std::vector<double>& v) {
  py::array_t<double> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> as_vector(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }

PatchGrid grid_of(const Index3& image, const Index3& patch, const std::optional<Index3>& step) {
  return make_grid(image, patch, step.value_or(default_step(patch)));
}

KlInversion parse_inversion(const std::string& s) {
  if (s == "affine") return KlInversion::Affine;
  if (s == "negate") return KlInversion::Negate;
  throw Error(ErrorCode::InvalidArgument, "kl inversion must be 'affine' or 'negate', got '" + s + "'");
}

RunConfig run_config(const std::filesystem::path& manifest, const std::filesystem::path& model,
                     const std::filesystem::path& out, const std::string& method, double temperature,
                     const std::string& kl_invert, double sigma_scale, double target_tpr, int bins, unsigned workers) {
  RunConfig cfg;
  cfg.manifest = manifest;
  cfg.model = model;
  cfg.out_dir = out;
  const auto m = parse_method(method);
  if (!m) throw Error(ErrorCode::InvalidArgument, "unknown method '" + method + "'");
  cfg.method = *m;
  cfg.temperature = temperature;
  cfg.kl_inversion = parse_inversion(kl_invert);
  cfg.sigma_scale = sigma_scale;
  cfg.target_tpr = target_tpr;
  cfg.bins = bins;
  cfg.workers = workers;
  return cfg;
}

py::dict report_dict(const DetectionReport& r) {
  py::dict d;
  d["boundary"] = r.boundary;
  d["tpr_val"] = r.tpr_val;
  d["tpr_test"] = r.tpr_test;
  d["fpr"] = r.fpr;
  d["detection_error"] = r.detection_error;
  d["esce"] = r.esce;
  d["admitted_dice_mean"] = r.admitted_dice_mean;
  d["admitted_dice_sd"] = r.admitted_dice_sd;
  d["n_val"] = r.n_val;
  d["n_test"] = r.n_test;
  d["n_ood"] = r.n_ood;
  d["n_admitted"] = r.n_admitted;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mahalanobis-distance OOD detection for patch-based segmentation";
  py::register_exception<Error>(m, "PatchoodError", PyExc_RuntimeError);

  // Tensor files
  m.def("read_npy", [](const std::filesystem::path& p) { return to_array(read_tensor(p)); }, py::arg("path"));
  m.def("write_npy", [](const std::filesystem::path& p, const py::array& a) { write_tensor(to_tensor(a), p); },
        py::arg("path"), py::arg("array"), "Writes float32 arrays as <f4 and everything else as <f8.");

  // Reduction and the Gaussian model
  m.def(
      "reduce_to_vector",
      [](const py::array& feature, const Index3& kernel, const Index3& stride, std::size_t max_elements) {
        const PoolingConfig cfg{kernel, stride, max_elements};
        cfg.validate();
        return reduce_to_vector(FeatureTensor::from_tensor(to_tensor(feature)), cfg).values;
      },
      py::arg("feature"), py::arg("kernel") = Index3{2, 2, 2}, py::arg("stride") = Index3{2, 2, 2},
      py::arg("max_elements") = std::size_t{10000});

  py::class_<GaussianModel>(m, "GaussianModel")
      .def_readonly("d", &GaussianModel::d)
      .def_readonly("mu", &GaussianModel::mu)
      .def_readonly("sigma", &GaussianModel::sigma)
      .def_readonly("chol", &GaussianModel::chol)
      .def_readonly("epsilon", &GaussianModel::epsilon)
      .def_readonly("n_samples", &GaussianModel::n_samples)
      .def("__repr__", [](const GaussianModel& g) {
        return "GaussianModel(d=" + std::to_string(g.d) + ", n_samples=" + std::to_string(g.n_samples) + ")";
      });

  m.def(
      "fit_gaussian",
      [](const DoubleArray& samples) {
        if (samples.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "samples must be a 2-D (N, d) array");
        const auto n = static_cast<std::size_t>(samples.shape(0)), d = static_cast<std::size_t>(samples.shape(1));
        std::vector<PooledFeature> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i].values.assign(samples.data() + i * d, samples.data() + (i + 1) * d);
        return fit_gaussian(rows);
      },
      py::arg("samples"));
  m.def(
      "mahalanobis",
      [](const GaussianModel& model, const DoubleArray& z) -> py::object {
        if (z.ndim() == 1) return py::float_(mahalanobis(std::span<const double>(z.data(), z.size()), model).value);
        if (z.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "z must be 1-D or 2-D");
        const auto n = static_cast<std::size_t>(z.shape(0)), d = static_cast<std::size_t>(z.shape(1));
        std::vector<double> out(n);
        const double* base = z.data();
        for (std::size_t i = 0; i < n; ++i) out[i] = mahalanobis(std::span<const double>(base + i * d, d), model).value;
        return vector_array(out);
      },
      py::arg("model"), py::arg("z"), "Squared Mahalanobis distance of one vector or each row.");
  m.def("save_model", [](const GaussianModel& g, const std::filesystem::path& p) { save_model(g, p); },
        py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  // Aggregation
  m.def(
      "make_grid",
      [](const Index3& image, const Index3& patch, const std::optional<Index3>& step) {
        return grid_of(image, patch, step).origins;
      },
      py::arg("image_shape"), py::arg("patch_size"), py::arg("step") = py::none());
  m.def(
      "make_filter",
      [](const Index3& patch, double sigma_scale) {
        return mask_array(UncertaintyMask{patch, make_filter(patch, sigma_scale).weights});
      },
      py::arg("patch_size"), py::arg("sigma_scale") = kDefaultSigmaScale);
  m.def(
      "build_uncertainty_mask",
      [](const Index3& image, const Index3& patch, const DoubleArray& scores, const std::optional<Index3>& step,
         double sigma_scale) {
        const auto mask =
            build_uncertainty_mask(grid_of(image, patch, step), as_vector(scores), make_filter(patch, sigma_scale));
        return py::make_tuple(mask_array(mask), subject_score(mask));
      },
      py::arg("image_shape"), py::arg("patch_size"), py::arg("patch_scores"), py::arg("step") = py::none(),
      py::arg("sigma_scale") = kDefaultSigmaScale, "Returns (mask, subject score).");

  // Baselines
  m.def(
      "max_softmax", [](const py::array& p) { return mask_array(max_softmax_uncertainty(SoftmaxVolume::from_tensor(to_tensor(p)))); },
      py::arg("probs"));
  m.def(
      "temp_scaled",
      [](const py::array& l, double t) { return mask_array(temp_scaled_uncertainty(LogitVolume::from_tensor(to_tensor(l)), t)); },
      py::arg("logits"), py::arg("temperature"));
  m.def(
      "kl_uniform",
      [](const py::array& p, const std::string& invert) {
        return mask_array(kl_from_uniform_uncertainty(SoftmaxVolume::from_tensor(to_tensor(p)), parse_inversion(invert)));
      },
      py::arg("probs"), py::arg("invert") = "affine");
  m.def(
      "mc_dropout",
      [](const std::vector<py::array>& samples) {
        std::vector<Tensor> ts;
        for (const auto& s : samples) ts.push_back(to_tensor(s));
        return mask_array(mc_dropout_uncertainty(McSampleSet::from_tensors(ts)));
      },
      py::arg("samples"));

  // Metrics
  m.def(
      "tpr_boundary", [](const DoubleArray& s, double t) { return tpr_boundary(as_vector(s), t); },
      py::arg("id_val_scores"), py::arg("target_tpr") = kDefaultTargetTpr);
  m.def(
      "fpr_at_boundary", [](const DoubleArray& s, double b) { return fpr_at_boundary(as_vector(s), b); },
      py::arg("ood_scores"), py::arg("boundary"));
  m.def("detection_error", &detection_error, py::arg("tpr"), py::arg("fpr"));
  m.def(
      "dice", [](const DoubleArray& p, const DoubleArray& g) { return dice(as_vector(p), as_vector(g)); },
      py::arg("pred"), py::arg("gt"), "Dice after thresholding both volumes at 0.5.");
  m.def(
      "esce",
      [](const DoubleArray& u, const DoubleArray& d, int bins) {
        if (u.size() != d.size()) throw Error(ErrorCode::LengthMismatch, "uncertainty and dice lengths differ");
        std::vector<EvaluationRecord> records;
        for (py::ssize_t i = 0; i < u.size(); ++i) records.push_back({std::to_string(i), Split::IdTest, u.data()[i], d.data()[i]});
        return esce(records, bins);
      },
      py::arg("uncertainty"), py::arg("dice"), py::arg("bins") = kDefaultBins);

  // Pipeline
  m.def(
      "synth",
      [](const std::filesystem::path& out, std::size_t d, std::size_t n_train, std::size_t n_val, std::size_t n_test,
         std::size_t n_ood, double mean_shift, double cov_rotation, double scale, std::uint64_t seed) {
        ShiftSpec spec{d, n_train, n_val, n_test, n_ood, mean_shift, cov_rotation, scale, seed};
        spec.validate();
        return generate(spec, out).manifest_path;
      },
      py::arg("out"), py::arg("d") = 16, py::arg("n_train") = 100, py::arg("n_val") = 20, py::arg("n_test") = 20,
      py::arg("n_ood") = 20, py::arg("mean_shift") = 0.0, py::arg("cov_rotation") = 0.0, py::arg("scale") = 1.0,
      py::arg("seed") = 0, "Generates a synthetic dataset and returns its manifest path.");
  m.def(
      "fit",
      [](const std::filesystem::path& manifest, const std::filesystem::path& model, unsigned workers) {
        RunConfig cfg;
        cfg.manifest = manifest;
        cfg.model = model;
        cfg.workers = workers;
        FitSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_fit(cfg);
        }
        return py::dict(py::arg("n_samples") = s.n_samples, py::arg("d") = s.d, py::arg("epsilon") = s.epsilon);
      },
      py::arg("manifest"), py::arg("model"), py::arg("workers") = 1);
  m.def(
      "score",
      [](const std::filesystem::path& manifest, const std::filesystem::path& out, const std::string& method,
         const std::filesystem::path& model, double temperature, const std::string& kl_invert, double sigma_scale,
         unsigned workers) {
        const RunConfig cfg = run_config(manifest, model, out, method, temperature, kl_invert, sigma_scale,
                                         kDefaultTargetTpr, kDefaultBins, workers);
        ScoreSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_score(cfg);
        }
        py::dict scores, failures;
        for (const auto& x : s.scores) scores[py::str(x.subject_id)] = x.raw;
        for (const auto& f : s.failures) failures[py::str(f.subject_id)] = f.message;
        return py::make_tuple(scores, failures);
      },
      py::arg("manifest"), py::arg("out"), py::arg("method") = "mahalanobis", py::arg("model") = "",
      py::arg("temperature") = 1.0, py::arg("kl_invert") = "affine", py::arg("sigma_scale") = kDefaultSigmaScale,
      py::arg("workers") = 1, "Returns ({subject: raw score}, {subject: error}).");
  m.def(
      "evaluate",
      [](const std::filesystem::path& manifest, const std::filesystem::path& out, const std::string& method,
         double temperature, const std::string& kl_invert, double sigma_scale, double target_tpr, int bins) {
        const RunConfig cfg =
            run_config(manifest, "", out, method, temperature, kl_invert, sigma_scale, target_tpr, bins, 1);
        EvaluateSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_evaluate(cfg);
        }
        return report_dict(s.report);
      },
      py::arg("manifest"), py::arg("out"), py::arg("method") = "mahalanobis", py::arg("temperature") = 1.0,
      py::arg("kl_invert") = "affine", py::arg("sigma_scale") = kDefaultSigmaScale,
      py::arg("target_tpr") = kDefaultTargetTpr, py::arg("bins") = kDefaultBins);
}
