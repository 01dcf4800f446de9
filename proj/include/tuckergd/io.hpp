#pragma once

// Little-endian binary containers:
//
//   TNS3  "TNS3" u8 version=1, u32 n1 n2 n3, then n1*n2*n3 f64 in
//         vectorization order.
//   TFQ1  "TFQ1" followed by four TNS3 blocks: U, V, W as n x r x 1
//         tensors, then the core S.
//   OBS1  see completion.hpp.
//   YVC1  "YVC1" u64 m, then m f64.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tuckergd/errors.hpp"
#include "tuckergd/factor_quad.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd::io {

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

template <class UInt>
void write_uint(std::ostream& os, UInt v) {
  char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(UInt));
}

inline void write_f64(std::ostream& os, double v) { write_uint(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

inline void require(std::istream& is, const char* what) {
  if (!is) throw FormatError(std::string("truncated input while reading ") + what);
}

inline std::uint8_t read_u8(std::istream& is) {
  char c = 0;
  is.get(c);
  require(is, "u8");
  return static_cast<std::uint8_t>(c);
}

template <class UInt>
UInt read_uint(std::istream& is) {
  unsigned char buf[sizeof(UInt)];
  is.read(reinterpret_cast<char*>(buf), sizeof(UInt));
  require(is, "integer");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(buf[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_uint<std::uint64_t>(is)); }

inline void expect_magic(std::istream& is, std::string_view magic) {
  char buf[4] = {};
  is.read(buf, 4);
  require(is, "magic");
  if (std::string_view(buf, 4) != magic) {
    throw FormatError("bad magic: expected " + std::string(magic) + ", got " + std::string(buf, 4));
  }
}

inline void write_tns3(std::ostream& os, const Tensor3& x) {
  write_magic(os, "TNS3");
  write_u8(os, 1);
  for (Index n : x.dims()) write_uint<std::uint32_t>(os, static_cast<std::uint32_t>(n));
  for (double v : x.data()) write_f64(os, v);
}

inline Tensor3 read_tns3(std::istream& is) {
  expect_magic(is, "TNS3");
  const auto version = read_u8(is);
  if (version != 1) throw FormatError("unsupported TNS3 version " + std::to_string(version));
  Dims d{};
  for (auto& n : d) {
    n = read_uint<std::uint32_t>(is);
    if (n == 0) throw FormatError("TNS3 dimension is zero");
  }
  Tensor3 x(d);
  for (double& v : x.data()) v = read_f64(is);
  return x;
}

inline Tensor3 matrix_as_tensor(const MatrixXd& m) {
  return Tensor3({m.rows(), m.cols(), 1}, Eigen::Map<const VectorXd>(m.data(), m.size()));
}

inline MatrixXd tensor_as_matrix(const Tensor3& t) {
  if (t.dim(2) != 1) throw FormatError("factor block must have third dimension 1");
  return Eigen::Map<const MatrixXd>(t.vec().data(), t.dim(0), t.dim(1));
}

inline void write_tfq1(std::ostream& os, const FactorQuad& f) {
  f.validate();
  write_magic(os, "TFQ1");
  write_tns3(os, matrix_as_tensor(f.U));
  write_tns3(os, matrix_as_tensor(f.V));
  write_tns3(os, matrix_as_tensor(f.W));
  write_tns3(os, f.S);
}

inline FactorQuad read_tfq1(std::istream& is) {
  expect_magic(is, "TFQ1");
  FactorQuad f;
  f.U = tensor_as_matrix(read_tns3(is));
  f.V = tensor_as_matrix(read_tns3(is));
  f.W = tensor_as_matrix(read_tns3(is));
  f.S = read_tns3(is);
  try {
    f.validate();
  } catch (const DimensionError& e) {
    throw FormatError(std::string("inconsistent TFQ1 blocks: ") + e.what());
  }
  return f;
}

inline void write_yvc1(std::ostream& os, const VectorXd& y) {
  write_magic(os, "YVC1");
  write_uint<std::uint64_t>(os, static_cast<std::uint64_t>(y.size()));
  for (Index i = 0; i < y.size(); ++i) write_f64(os, y[i]);
}

inline VectorXd read_yvc1(std::istream& is) {
  expect_magic(is, "YVC1");
  const auto m = read_uint<std::uint64_t>(is);
  VectorXd y(static_cast<Index>(m));
  for (Index i = 0; i < y.size(); ++i) y[i] = read_f64(is);
  return y;
}

/// Write through a sibling temp file and rename into place.
template <class Fn>
void write_file_atomic(const std::filesystem::path& path, Fn&& writer) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    writer(os);
    os.flush();
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return is;
}

}  // namespace tuckergd::io
