#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace patchood {

/// Named blobs stored in an uncompressed zip container, the layout numpy
/// uses for `.npz` files. Member order is preserved.
using ArchiveMembers = std::vector<std::pair<std::string, std::string>>;

void write_archive(const std::filesystem::path& path, const ArchiveMembers& members);
ArchiveMembers read_archive(const std::filesystem::path& path);

}  // namespace patchood
