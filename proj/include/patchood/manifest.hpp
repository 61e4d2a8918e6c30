#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "patchood/reduce.hpp"

namespace patchood {

enum class Split { IdTrain, IdVal, IdTest, Ood };

std::string_view to_string(Split s) noexcept;
/// Accepts ID_TRAIN, ID_VAL, ID_TEST, OOD.
std::optional<Split> parse_split(std::string_view s) noexcept;

struct SubjectEntry {
  std::string id;
  Split split = Split::IdTest;
  Index3 image_shape{1, 1, 1};
  std::vector<std::filesystem::path> feature_files;
  std::vector<Index3> patch_origins;
  std::optional<std::filesystem::path> softmax_file;
  std::optional<std::filesystem::path> logits_file;
  std::vector<std::filesystem::path> mc_sample_files;
  std::optional<std::filesystem::path> prediction_file;
  std::optional<std::filesystem::path> groundtruth_file;
};

/// A validated dataset description. Paths in a loaded manifest are resolved
/// against the manifest's directory.
struct DatasetManifest {
  Index3 patch_size{1, 1, 1};
  PoolingConfig pooling;
  std::vector<SubjectEntry> subjects;
};

/// Parses and validates a manifest document. Every referenced file must
/// exist under `base_dir` (relative paths) or as given (absolute paths).
DatasetManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Serializes with paths written relative to `path`'s directory when they
/// lie beneath it.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

}  // namespace patchood
