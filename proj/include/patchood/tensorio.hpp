#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace patchood {

enum class DType { F32, F64 };

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;

/// A dense row-major array as stored on disk.
///
/// Values are held as doubles regardless of the on-disk dtype; float32 data
/// widens exactly and narrows back to the identical bit pattern on write.
struct Tensor {
  DType dtype = DType::F64;
  Shape shape;
  std::vector<double> data;

  std::size_t size() const noexcept { return data.size(); }
};

/// Serializes to the `.npy` version 1.0 byte layout.
std::string encode_tensor(const Tensor& t);

/// Parses `.npy` bytes. `origin` is used in error messages only.
Tensor decode_tensor(std::string_view bytes, std::string_view origin = "<memory>");

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const Tensor& t, const std::filesystem::path& path);

// Small helpers shared by the file-producing modules.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace patchood
