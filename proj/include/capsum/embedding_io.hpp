#pragma once

// EMB1 sidecar format:
//   bytes 0..3   "EMB1"
//   bytes 4..7   n_rows, uint32 little-endian
//   bytes 8..11  dim,    uint32 little-endian
//   then n_rows*dim IEEE-754 float32 little-endian values, row-major.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "capsum/error.hpp"
#include "capsum/matrix.hpp"

namespace capsum {

/// n x d matrix of embeddings with finite entries and strictly positive row norms.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  explicit EmbeddingMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() == 0 || m_.cols() == 0)
      throw Error(Errc::ZeroNormRow, "embedding matrix must have at least one row and column");
    for (std::size_t r = 0; r < m_.rows(); ++r) {
      double sq = 0.0;
      for (double v : m_.row(r)) {
        if (!std::isfinite(v)) throw Error(Errc::ZeroNormRow, "row " + std::to_string(r) + " has a non-finite entry");
        sq += v * v;
      }
      if (!(sq > 0.0)) throw Error(Errc::ZeroNormRow, "row " + std::to_string(r) + " has zero norm");
    }
  }

  static EmbeddingMatrix from_rows(const std::vector<Vector>& rows) {
    return EmbeddingMatrix(Matrix::from_rows(rows));
  }

  std::size_t n_rows() const noexcept { return m_.rows(); }
  std::size_t dim() const noexcept { return m_.cols(); }
  std::span<const double> row(std::size_t r) const { return m_.row(r); }
  const Matrix& matrix() const noexcept { return m_; }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  Matrix m_;
};

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline constexpr std::array<char, 4> kEmbeddingMagic{'E', 'M', 'B', '1'};

/// Serialize to the EMB1 byte layout. Values are rounded to float32; a row
/// that becomes zero or non-finite after rounding is rejected.
inline std::vector<char> encode_embeddings(const EmbeddingMatrix& m) {
  if (m.n_rows() > std::numeric_limits<std::uint32_t>::max() || m.dim() > std::numeric_limits<std::uint32_t>::max())
    throw Error(Errc::SchemaError, "embedding matrix too large for EMB1");
  std::vector<char> out(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  out.reserve(12 + 4 * m.n_rows() * m.dim());
  detail::put_u32(out, static_cast<std::uint32_t>(m.n_rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.dim()));
  for (std::size_t r = 0; r < m.n_rows(); ++r) {
    double sq = 0.0;
    for (double v : m.row(r)) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) throw Error(Errc::ZeroNormRow, "row " + std::to_string(r) + " overflows float32");
      sq += static_cast<double>(f) * f;
      detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    if (!(sq > 0.0)) throw Error(Errc::ZeroNormRow, "row " + std::to_string(r) + " underflows to zero in float32");
  }
  return out;
}

inline EmbeddingMatrix decode_embeddings(std::span<const char> bytes) {
  if (bytes.size() < 4 || !std::equal(kEmbeddingMagic.begin(), kEmbeddingMagic.end(), bytes.begin()))
    throw Error(Errc::BadMagic, "missing EMB1 magic");
  if (bytes.size() < 12) throw Error(Errc::TruncatedFile, "header shorter than 12 bytes");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t rows = detail::get_u32(p + 4);
  const std::uint64_t dim = detail::get_u32(p + 8);
  const std::uint64_t payload = rows * dim * 4;
  if (bytes.size() - 12 < payload)
    throw Error(Errc::TruncatedFile, "payload has " + std::to_string(bytes.size() - 12) + " bytes, expected " +
                                         std::to_string(payload));
  if (bytes.size() - 12 > payload) throw Error(Errc::ParseError, "trailing bytes after EMB1 payload");
  std::vector<double> values(rows * dim);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<double>(std::bit_cast<float>(detail::get_u32(p + 12 + 4 * i)));
  return EmbeddingMatrix(Matrix(rows, dim, std::move(values)));
}

inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  const auto bytes = encode_embeddings(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IOError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IOError, "short write to " + path.string());
}

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IOError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_embeddings(bytes);
}

}  // namespace capsum
