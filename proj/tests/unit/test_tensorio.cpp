#include <doctest.h>

#include <cstring>
#include <fstream>

#include "expect_error.hpp"
#include "oracles.hpp"
#include "patchood/error.hpp"
#include "patchood/rng.hpp"
#include "patchood/tensorio.hpp"

using namespace patchood;

namespace {

std::string npy(const std::string& dict, std::string_view payload) {
  std::string header = dict;
  while ((10 + header.size() + 1) % 64) header += ' ';
  header += '\n';
  std::string out = "\x93NUMPY";
  out += '\x01';
  out += '\x00';
  out += static_cast<char>(header.size() & 0xff);
  out += static_cast<char>(header.size() >> 8);
  return out + header + std::string(payload);
}

}  // namespace

TEST_CASE("decodes a hand-built float32 file") {
  const float values[] = {1, 2, 3, 4};
  const auto bytes = npy("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }",
                         std::string_view(reinterpret_cast<const char*>(values), sizeof values));
  const Tensor t = decode_tensor(bytes);
  CHECK(t.dtype == DType::F32);
  CHECK(t.shape == Shape{2, 2});
  CHECK(t.data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("encoded header is 64-byte aligned and matches the numpy layout") {
  Tensor t{DType::F64, {3}, {1.5, -2.0, 0.25}};
  const std::string bytes = encode_tensor(t);
  CHECK(bytes.substr(0, 6) == "\x93NUMPY");
  CHECK(bytes[6] == 1);
  CHECK(bytes[7] == 0);
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  CHECK((10 + header_len) % 64 == 0);
  CHECK(bytes[10 + header_len - 1] == '\n');
  CHECK(bytes.find("{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }") == 10);
  CHECK(bytes.size() == 10 + header_len + 24);
}

TEST_CASE("round trip is bit exact for random tensors") {
  oracle::TempDir dir("tensorio");
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    Tensor t;
    t.dtype = (i % 2) ? DType::F32 : DType::F64;
    const std::size_t rank = 1 + rng.next() % 4;
    for (std::size_t r = 0; r < rank; ++r) t.shape.push_back(1 + rng.next() % 5);
    for (std::size_t k = 0; k < element_count(t.shape); ++k) {
      const double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
      t.data.push_back(t.dtype == DType::F32 ? static_cast<double>(static_cast<float>(v)) : v);
    }
    const auto path = dir / ("t" + std::to_string(i) + ".npy");
    write_tensor(t, path);
    const Tensor back = read_tensor(path);
    CHECK(back.dtype == t.dtype);
    CHECK(back.shape == t.shape);
    REQUIRE(back.data.size() == t.data.size());
    CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("f64 survives without precision loss") {
  Tensor t{DType::F64, {2}, {0.1, 1.0 / 3.0}};
  const Tensor back = decode_tensor(encode_tensor(t));
  CHECK(back.data[0] == 0.1);
  CHECK(back.data[1] == 1.0 / 3.0);
}

TEST_CASE("single element tensor") {
  oracle::TempDir dir("tensorio1");
  write_tensor(Tensor{DType::F64, {1}, {0.0}}, dir / "one.npy");
  const Tensor back = read_tensor(dir / "one.npy");
  CHECK(back.shape == Shape{1});
  CHECK(back.data == std::vector<double>{0.0});
}

TEST_CASE("write rejects empty shapes and zero dimensions") {
  CHECK(error_code_of([] { encode_tensor(Tensor{DType::F64, {0}, {}}); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([] { encode_tensor(Tensor{DType::F64, {}, {}}); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([] { encode_tensor(Tensor{DType::F64, {2}, {1.0}}); }) == ErrorCode::ShapeDataMismatch);
}

TEST_CASE("write into a missing directory is an I/O failure") {
  CHECK(error_code_of([] { write_tensor(Tensor{DType::F64, {1}, {0.0}}, "/nonexistent-dir/x.npy"); }) ==
        ErrorCode::IoFailure);
}

TEST_CASE("malformed files map to classified errors") {
  const std::string good = encode_tensor(Tensor{DType::F32, {2, 2}, {1, 2, 3, 4}});
  const float four[] = {1, 2, 3, 4};
  const std::string_view payload(reinterpret_cast<const char*>(four), sizeof four);

  SUBCASE("truncated mid-data") {
    CHECK(error_code_of([&] { decode_tensor(good.substr(0, good.size() - 3)); }) == ErrorCode::ShapeDataMismatch);
  }
  SUBCASE("trailing bytes") { CHECK(error_code_of([&] { decode_tensor(good + "xx"); }) == ErrorCode::ShapeDataMismatch); }
  SUBCASE("bad magic") {
    std::string bad = good;
    bad[1] = 'X';
    CHECK(error_code_of([&] { decode_tensor(bad); }) == ErrorCode::MalformedHeader);
  }
  SUBCASE("truncated header") { CHECK(error_code_of([&] { decode_tensor(good.substr(0, 20)); }) == ErrorCode::MalformedHeader); }
  SUBCASE("big-endian") {
    CHECK(error_code_of([&] { decode_tensor(npy("{'descr': '>f4', 'fortran_order': False, 'shape': (2, 2), }", payload)); }) ==
          ErrorCode::UnsupportedDtype);
  }
  SUBCASE("integer dtype") {
    CHECK(error_code_of([&] { decode_tensor(npy("{'descr': '<i4', 'fortran_order': False, 'shape': (2, 2), }", payload)); }) ==
          ErrorCode::UnsupportedDtype);
  }
  SUBCASE("fortran order") {
    CHECK(error_code_of([&] { decode_tensor(npy("{'descr': '<f4', 'fortran_order': True, 'shape': (2, 2), }", payload)); }) ==
          ErrorCode::UnsupportedDtype);
  }
  SUBCASE("missing shape key") {
    CHECK(error_code_of([&] { decode_tensor(npy("{'descr': '<f4', 'fortran_order': False, }", payload)); }) ==
          ErrorCode::MalformedHeader);
  }
  SUBCASE("non-dict header") {
    CHECK(error_code_of([&] { decode_tensor(npy("descr <f4", payload)); }) == ErrorCode::MalformedHeader);
  }
  SUBCASE("garbage shape") {
    CHECK(error_code_of([&] { decode_tensor(npy("{'descr': '<f4', 'fortran_order': False, 'shape': (2, x), }", payload)); }) ==
          ErrorCode::MalformedHeader);
  }
  SUBCASE("unknown version") {
    std::string bad = good;
    bad[6] = 9;
    CHECK(error_code_of([&] { decode_tensor(bad); }) == ErrorCode::MalformedHeader);
  }
}

TEST_CASE("reading a missing file is an I/O failure") {
  CHECK(error_code_of([] { read_tensor("/nonexistent/file.npy"); }) == ErrorCode::IoFailure);
}
