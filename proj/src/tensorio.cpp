#include "patchood/tensorio.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "patchood/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor I/O assumes a little-endian host");

namespace patchood {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kAlignment = 64;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

// Returns the raw text of the value stored under `key` in a python-literal
// dict. Values are quoted strings, bare words, or parenthesised tuples.
std::string_view dict_value(std::string_view dict, std::string_view key, std::string_view origin) {
  for (char quote : {'\'', '"'}) {
    std::string needle = std::string(1, quote) + std::string(key) + quote;
    auto pos = dict.find(needle);
    if (pos == std::string_view::npos) continue;
    pos = dict.find(':', pos + needle.size());
    if (pos == std::string_view::npos) break;
    std::string_view rest = trim(dict.substr(pos + 1));
    if (rest.empty()) break;
    std::size_t end = 0;
    if (rest.front() == '(') {
      end = rest.find(')');
      if (end == std::string_view::npos) break;
      return rest.substr(0, end + 1);
    }
    if (rest.front() == '\'' || rest.front() == '"') {
      end = rest.find(rest.front(), 1);
      if (end == std::string_view::npos) break;
      return rest.substr(0, end + 1);
    }
    end = rest.find_first_of(",}");
    return trim(rest.substr(0, end));
  }
  throw Error(ErrorCode::MalformedHeader,
              std::string(origin) + ": header lacks key '" + std::string(key) + "'");
}

Shape parse_shape(std::string_view text, std::string_view origin) {
  if (text.size() < 2 || text.front() != '(' || text.back() != ')')
    throw Error(ErrorCode::MalformedHeader, std::string(origin) + ": shape is not a tuple");
  text = text.substr(1, text.size() - 2);
  Shape shape;
  while (true) {
    text = trim(text);
    if (text.empty()) break;
    std::size_t dim = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), dim);
    if (ec != std::errc())
      throw Error(ErrorCode::MalformedHeader, std::string(origin) + ": bad shape entry");
    shape.push_back(dim);
    text.remove_prefix(static_cast<std::size_t>(ptr - text.data()));
    text = trim(text);
    if (text.empty()) break;
    if (text.front() != ',')
      throw Error(ErrorCode::MalformedHeader, std::string(origin) + ": bad shape separator");
    text.remove_prefix(1);
  }
  if (shape.empty())
    throw Error(ErrorCode::MalformedHeader, std::string(origin) + ": zero-dimensional arrays are not supported");
  for (auto d : shape)
    if (d == 0) throw Error(ErrorCode::MalformedHeader, std::string(origin) + ": zero-length dimension");
  return shape;
}

std::string shape_literal(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  if (shape.size() == 1) out += ",";
  out += ")";
  return out;
}

}  // namespace

std::size_t element_count(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string encode_tensor(const Tensor& t) {
  if (t.shape.empty())
    throw Error(ErrorCode::InvalidArgument, "tensor shape must be non-empty");
  for (auto d : t.shape)
    if (d == 0) throw Error(ErrorCode::InvalidArgument, "tensor dimensions must be positive");
  if (element_count(t.shape) != t.data.size())
    throw Error(ErrorCode::ShapeDataMismatch, "shape does not match value count");

  std::string dict = "{'descr': '";
  dict += t.dtype == DType::F32 ? "<f4" : "<f8";
  dict += "', 'fortran_order': False, 'shape': " + shape_literal(t.shape) + ", }";
  const std::size_t preamble = kMagicLen + 2 + 2;
  std::size_t total = preamble + dict.size() + 1;
  total = (total + kAlignment - 1) / kAlignment * kAlignment;
  dict.append(total - preamble - dict.size() - 1, ' ');
  dict.push_back('\n');

  const std::size_t width = t.dtype == DType::F32 ? 4 : 8;
  std::string out;
  out.reserve(total + t.data.size() * width);
  out.append(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto header_len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(header_len & 0xff));
  out.push_back(static_cast<char>(header_len >> 8));
  out += dict;

  const std::size_t offset = out.size();
  out.resize(offset + t.data.size() * width);
  char* dst = out.data() + offset;
  if (t.dtype == DType::F32) {
    for (double v : t.data) {
      const auto f = static_cast<float>(v);
      std::memcpy(dst, &f, 4);
      dst += 4;
    }
  } else {
    std::memcpy(dst, t.data.data(), t.data.size() * 8);
  }
  return out;
}

Tensor decode_tensor(std::string_view bytes, std::string_view origin) {
  const std::string where(origin);
  if (bytes.size() < kMagicLen + 4 || bytes.substr(0, kMagicLen) != std::string_view(kMagic, kMagicLen))
    throw Error(ErrorCode::MalformedHeader, where + ": missing array magic");
  const auto major = static_cast<unsigned char>(bytes[kMagicLen]);
  std::size_t header_len = 0;
  std::size_t header_start = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    header_start = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw Error(ErrorCode::MalformedHeader, where + ": truncated header");
    for (int i = 3; i >= 0; --i) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[8 + i]);
    header_start = 12;
  } else {
    throw Error(ErrorCode::MalformedHeader, where + ": unsupported format version " + std::to_string(major));
  }
  if (bytes.size() < header_start + header_len)
    throw Error(ErrorCode::MalformedHeader, where + ": truncated header");
  std::string_view dict = trim(bytes.substr(header_start, header_len));
  if (dict.empty() || dict.front() != '{' || dict.back() != '}')
    throw Error(ErrorCode::MalformedHeader, where + ": header is not a dict literal");

  std::string_view descr = dict_value(dict, "descr", origin);
  std::string_view fortran = dict_value(dict, "fortran_order", origin);
  Shape shape = parse_shape(dict_value(dict, "shape", origin), origin);

  if (descr.size() < 2 || (descr.front() != '\'' && descr.front() != '"'))
    throw Error(ErrorCode::MalformedHeader, where + ": descr is not a string");
  descr = descr.substr(1, descr.size() - 2);
  Tensor t;
  std::size_t width = 0;
  if (descr == "<f4") {
    t.dtype = DType::F32;
    width = 4;
  } else if (descr == "<f8") {
    t.dtype = DType::F64;
    width = 8;
  } else {
    throw Error(ErrorCode::UnsupportedDtype, where + ": dtype '" + std::string(descr) + "'");
  }
  if (fortran == "True")
    throw Error(ErrorCode::UnsupportedDtype, where + ": fortran-ordered arrays are not supported");
  if (fortran != "False")
    throw Error(ErrorCode::MalformedHeader, where + ": bad fortran_order value");

  const std::size_t count = element_count(shape);
  const std::string_view payload = bytes.substr(header_start + header_len);
  if (payload.size() != count * width)
    throw Error(ErrorCode::ShapeDataMismatch,
                where + ": expected " + std::to_string(count * width) + " data bytes, found " +
                    std::to_string(payload.size()));
  t.shape = std::move(shape);
  t.data.resize(count);
  if (width == 4) {
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, payload.data() + i * 4, 4);
      t.data[i] = f;
    }
  } else {
    std::memcpy(t.data.data(), payload.data(), count * 8);
  }
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed for " + path.string());
  return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file(path), path.string());
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file(path, encode_tensor(t));
}

}  // namespace patchood
