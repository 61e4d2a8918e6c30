#include "patchood/manifest.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "patchood/error.hpp"
#include "patchood/tensorio.hpp"

namespace patchood {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::SchemaError, where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where, std::string("missing field '") + key + "'");
  return *it;
}

std::size_t positive_int(const json& v, const std::string& where, const char* field) {
  if (!v.is_number_integer() || v.get<long long>() < 1)
    schema_error(where, std::string("field '") + field + "' must be a positive integer");
  return v.get<std::size_t>();
}

Index3 triple(const json& v, const std::string& where, const char* field, bool allow_zero) {
  if (!v.is_array() || v.size() != 3) schema_error(where, std::string("field '") + field + "' must be a list of 3 integers");
  Index3 out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number_integer() || v[i].get<long long>() < (allow_zero ? 0 : 1))
      schema_error(where, std::string("field '") + field + "' must hold " + (allow_zero ? "non-negative" : "positive") +
                              " integers");
    out[i] = v[i].get<std::size_t>();
  }
  return out;
}

fs::path resolve_file(const json& v, const fs::path& base, const std::string& where, const std::string& field) {
  if (!v.is_string()) schema_error(where, "field '" + field + "' must be a path string");
  fs::path p = v.get<std::string>();
  if (p.empty()) schema_error(where, "field '" + field + "' is empty");
  if (p.is_relative()) p = base / p;
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::MissingFile, where + ": " + field + " not found: " + p.string());
  return p;
}

std::optional<fs::path> optional_file(const json& obj, const char* key, const fs::path& base, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return resolve_file(*it, base, where, key);
}

std::string portable(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() && !base.empty()) {
    const fs::path rel = p.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  }
  return p.generic_string();
}

SubjectEntry parse_subject(const json& s, std::size_t index, const DatasetManifest& m, const fs::path& base) {
  std::string where = "subjects[" + std::to_string(index) + "]";
  if (!s.is_object()) schema_error(where, "subject must be an object");
  SubjectEntry e;
  const json& id = require(s, "id", where);
  if (!id.is_string() || id.get<std::string>().empty()) schema_error(where, "field 'id' must be a non-empty string");
  e.id = id.get<std::string>();
  where = "subject '" + e.id + "'";

  const json& split = require(s, "split", where);
  if (!split.is_string()) schema_error(where, "field 'split' must be a string");
  auto parsed = parse_split(split.get<std::string>());
  if (!parsed) schema_error(where, "field 'split' must be one of ID_TRAIN, ID_VAL, ID_TEST, OOD");
  e.split = *parsed;
  e.image_shape = triple(require(s, "image_shape", where), where, "image_shape", false);

  const json features = s.value("feature_files", json::array());
  const json origins = s.value("patch_origins", json::array());
  if (!features.is_array()) schema_error(where, "field 'feature_files' must be a list");
  if (!origins.is_array()) schema_error(where, "field 'patch_origins' must be a list");
  if (features.size() != origins.size())
    schema_error(where, "feature_files has " + std::to_string(features.size()) + " entries but patch_origins has " +
                            std::to_string(origins.size()));
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const std::string field = "patch_origins[" + std::to_string(i) + "]";
    const Index3 o = triple(origins[i], where, field.c_str(), true);
    for (int a = 0; a < 3; ++a)
      if (o[a] + m.patch_size[a] > e.image_shape[a])
        throw Error(ErrorCode::GeometryError, where + ": " + field + " plus patch_size exceeds image_shape on axis " +
                                                  std::to_string(a) + " (" + std::to_string(o[a]) + " + " +
                                                  std::to_string(m.patch_size[a]) + " > " +
                                                  std::to_string(e.image_shape[a]) + ")");
    e.patch_origins.push_back(o);
  }
  for (std::size_t i = 0; i < features.size(); ++i)
    e.feature_files.push_back(resolve_file(features[i], base, where, "feature_files[" + std::to_string(i) + "]"));

  e.softmax_file = optional_file(s, "softmax_file", base, where);
  e.logits_file = optional_file(s, "logits_file", base, where);
  e.prediction_file = optional_file(s, "prediction_file", base, where);
  e.groundtruth_file = optional_file(s, "groundtruth_file", base, where);
  if (auto it = s.find("mc_sample_files"); it != s.end() && !it->is_null()) {
    if (!it->is_array()) schema_error(where, "field 'mc_sample_files' must be a list");
    for (std::size_t i = 0; i < it->size(); ++i)
      e.mc_sample_files.push_back(resolve_file((*it)[i], base, where, "mc_sample_files[" + std::to_string(i) + "]"));
  }
  return e;
}

}  // namespace

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::IdTrain: return "ID_TRAIN";
    case Split::IdVal: return "ID_VAL";
    case Split::IdTest: return "ID_TEST";
    case Split::Ood: return "OOD";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "ID_TRAIN") return Split::IdTrain;
  if (s == "ID_VAL") return Split::IdVal;
  if (s == "ID_TEST") return Split::IdTest;
  if (s == "OOD") return Split::Ood;
  return std::nullopt;
}

DatasetManifest parse_manifest(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) schema_error("manifest", "top level must be an object");
  DatasetManifest m;
  m.patch_size = triple(require(doc, "patch_size", "manifest"), "manifest", "patch_size", false);
  if (auto it = doc.find("pooling"); it != doc.end()) {
    if (!it->is_object()) schema_error("manifest", "field 'pooling' must be an object");
    if (it->contains("kernel")) m.pooling.kernel = triple(it->at("kernel"), "pooling", "kernel", false);
    if (it->contains("stride")) m.pooling.stride = triple(it->at("stride"), "pooling", "stride", false);
    if (it->contains("max_elements")) m.pooling.max_elements = positive_int(it->at("max_elements"), "pooling", "max_elements");
  }
  const json& subjects = require(doc, "subjects", "manifest");
  if (!subjects.is_array()) schema_error("manifest", "field 'subjects' must be a list");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    SubjectEntry e = parse_subject(subjects[i], i, m, base_dir);
    if (!seen.insert(e.id).second) schema_error("subject '" + e.id + "'", "duplicate subject id");
    m.subjects.push_back(std::move(e));
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::MissingFile, "manifest not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  return parse_manifest(doc, fs::absolute(path).parent_path());
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  json subjects = json::array();
  for (const auto& e : m.subjects) {
    json s = {{"id", e.id}, {"split", std::string(to_string(e.split))}, {"image_shape", e.image_shape}};
    json features = json::array();
    for (const auto& f : e.feature_files) features.push_back(portable(f, base));
    s["feature_files"] = std::move(features);
    s["patch_origins"] = e.patch_origins;
    if (e.softmax_file) s["softmax_file"] = portable(*e.softmax_file, base);
    if (e.logits_file) s["logits_file"] = portable(*e.logits_file, base);
    if (!e.mc_sample_files.empty()) {
      json mc = json::array();
      for (const auto& f : e.mc_sample_files) mc.push_back(portable(f, base));
      s["mc_sample_files"] = std::move(mc);
    }
    if (e.prediction_file) s["prediction_file"] = portable(*e.prediction_file, base);
    if (e.groundtruth_file) s["groundtruth_file"] = portable(*e.groundtruth_file, base);
    subjects.push_back(std::move(s));
  }
  json doc = {
      {"patch_size", m.patch_size},
      {"pooling", {{"kernel", m.pooling.kernel}, {"stride", m.pooling.stride}, {"max_elements", m.pooling.max_elements}}},
      {"subjects", std::move(subjects)},
  };
  write_file(path, doc.dump(1) + "\n");
}

}  // namespace patchood
