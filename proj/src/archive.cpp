#include "patchood/archive.hpp"

#include <zlib.h>

#include <cstdint>

#include "patchood/error.hpp"
#include "patchood/tensorio.hpp"

namespace patchood {
namespace {

// 1980-01-01 00:00, the zip epoch; fixed so archives are byte-reproducible.
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get(const std::string& in, std::size_t pos, int width) {
  if (pos + static_cast<std::size_t>(width) > in.size())
    throw Error(ErrorCode::MalformedHeader, "archive truncated");
  std::uint32_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace

void write_archive(const std::filesystem::path& path, const ArchiveMembers& members) {
  std::string out;
  std::string central;
  for (const auto& [name, data] : members) {
    if (data.size() > 0xffffffffu || name.size() > 0xffffu)
      throw Error(ErrorCode::InvalidArgument, "archive member too large: " + name);
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
    const auto size = static_cast<std::uint32_t>(data.size());
    const auto offset = static_cast<std::uint32_t>(out.size());

    put32(out, 0x04034b50);
    put16(out, 20);  // version needed
    put16(out, 0);   // flags
    put16(out, 0);   // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<std::uint16_t>(name.size()));
    put16(out, 0);
    out += name;
    out += data;

    put32(central, 0x02014b50);
    put16(central, 20);  // version made by
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<std::uint16_t>(name.size()));
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central += name;
  }
  const auto central_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(members.size()));
  put16(out, static_cast<std::uint16_t>(members.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, central_offset);
  put16(out, 0);
  write_file(path, out);
}

ArchiveMembers read_archive(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  ArchiveMembers members;
  std::size_t pos = 0;
  while (pos + 4 <= in.size() && get(in, pos, 4) == 0x04034b50) {
    const auto flags = get(in, pos + 6, 2);
    const auto method = get(in, pos + 8, 2);
    const auto crc = get(in, pos + 14, 4);
    const auto size = get(in, pos + 18, 4);
    const auto name_len = get(in, pos + 26, 2);
    const auto extra_len = get(in, pos + 28, 2);
    if (method != 0 || (flags & 0x8))
      throw Error(ErrorCode::MalformedHeader, path.string() + ": only stored archive members are supported");
    const std::size_t name_at = pos + 30;
    const std::size_t data_at = name_at + name_len + extra_len;
    if (data_at + size > in.size()) throw Error(ErrorCode::ShapeDataMismatch, path.string() + ": archive truncated");
    std::string name = in.substr(name_at, name_len);
    std::string data = in.substr(data_at, size);
    const auto actual = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
    if (actual != crc) throw Error(ErrorCode::MalformedHeader, path.string() + ": checksum mismatch in " + name);
    members.emplace_back(std::move(name), std::move(data));
    pos = data_at + size;
  }
  if (members.empty()) throw Error(ErrorCode::MalformedHeader, path.string() + ": not an archive");
  return members;
}

}  // namespace patchood
