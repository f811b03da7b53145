#pragma once

// Model file layout (all integers little-endian, doubles as IEEE-754 binary64):
//
//   char[10]  magic "C3PO-MODEL"
//   u32       format version (1)
//   u32       feature schema version
//   u32       n_dims, then n_dims x u32 layer widths
//   per layer: out*in f64 weights (row-major), out f64 biases
//   u32       encoding spec length, then that many bytes of spec text
//   32 x f64  normalization means
//   32 x f64  normalization standard deviations
//   32 x u8   constant-slot flags
//   u64       training seed
//   u32       epochs run
//   u32       loss-curve length, then that many f64
//   u64       FNV-1a 64 of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "c3po/checksum.hpp"
#include "c3po/dataset.hpp"
#include "c3po/encoding.hpp"
#include "c3po/error.hpp"
#include "c3po/mlp.hpp"

namespace c3po {

inline constexpr std::string_view kModelMagic = "C3PO-MODEL";
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptFile, "truncated model file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_model(const ModelSnapshot& m) {
  detail::ByteWriter w;
  w.bytes(kModelMagic);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.schema_version));
  w.u32(static_cast<std::uint32_t>(m.layer_dims.size()));
  for (auto d : m.layer_dims) w.u32(static_cast<std::uint32_t>(d));
  for (const auto& l : m.layers) {
    for (double x : l.weights) w.f64(x);
    for (double x : l.biases) w.f64(x);
  }
  const std::string spec = emit_encoding_spec(m.encoding);
  w.u32(static_cast<std::uint32_t>(spec.size()));
  w.bytes(spec);
  for (double x : m.normalization.mean) w.f64(x);
  for (double x : m.normalization.stddev) w.f64(x);
  for (bool c : m.normalization.constant) w.u8(c ? 1 : 0);
  w.u64(m.training.seed);
  w.u32(m.training.epochs);
  w.u32(static_cast<std::uint32_t>(m.training.loss_curve.size()));
  for (double x : m.training.loss_curve) w.f64(x);
  w.u64(fnv1a64(w.str()));
  return std::move(w.str());
}

inline ModelSnapshot deserialize_model(std::string_view data) {
  if (data.size() < kModelMagic.size() || data.substr(0, kModelMagic.size()) != kModelMagic) {
    throw Error(ErrorCode::CorruptFile, "missing C3PO-MODEL magic");
  }
  detail::ByteReader r(data.substr(kModelMagic.size()));
  const std::uint32_t format = r.u32();
  if (format != kModelFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(format) + ", supported " +
                                               std::to_string(kModelFormatVersion));
  }
  const std::uint32_t schema = r.u32();
  if (schema != static_cast<std::uint32_t>(kSchemaVersion)) {
    throw Error(ErrorCode::VersionMismatch, "feature schema version " + std::to_string(schema) + ", supported " +
                                               std::to_string(kSchemaVersion));
  }
  if (data.size() < kModelMagic.size() + 8 + 8) throw Error(ErrorCode::CorruptFile, "truncated model file");
  const std::string_view body = data.substr(0, data.size() - 8);
  detail::ByteReader trailer(data.substr(data.size() - 8));
  if (trailer.u64() != fnv1a64(body)) throw Error(ErrorCode::CorruptFile, "checksum mismatch");

  ModelSnapshot m;
  m.schema_version = static_cast<int>(schema);
  const std::uint32_t n_dims = r.u32();
  if (n_dims < 2 || n_dims > 64) throw Error(ErrorCode::CorruptFile, "implausible layer count");
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    const std::uint32_t d = r.u32();
    if (d == 0 || d > (1u << 20)) throw Error(ErrorCode::CorruptFile, "implausible layer width");
    m.layer_dims.push_back(d);
  }
  if (m.layer_dims.back() != 1) throw Error(ErrorCode::CorruptFile, "output layer must have width 1");
  for (std::size_t i = 0; i + 1 < m.layer_dims.size(); ++i) {
    Layer l;
    l.in = m.layer_dims[i];
    l.out = m.layer_dims[i + 1];
    if (r.remaining() / 8 < l.in * l.out + l.out) throw Error(ErrorCode::CorruptFile, "truncated parameter block");
    l.weights.resize(l.in * l.out);
    for (auto& x : l.weights) x = r.f64();
    l.biases.resize(l.out);
    for (auto& x : l.biases) x = r.f64();
    for (double x : l.weights) {
      if (!std::isfinite(x)) throw Error(ErrorCode::CorruptFile, "non-finite weight");
    }
    for (double x : l.biases) {
      if (!std::isfinite(x)) throw Error(ErrorCode::CorruptFile, "non-finite bias");
    }
    m.layers.push_back(std::move(l));
  }
  const std::uint32_t spec_len = r.u32();
  try {
    m.encoding = parse_encoding_spec(r.bytes(spec_len));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptFile || e.code() == ErrorCode::VersionMismatch) throw;
    throw Error(ErrorCode::CorruptFile, "embedded encoding spec: " + std::string(e.what()));
  }
  if (m.encoding.output_dim() != m.layer_dims.front()) {
    throw Error(ErrorCode::CorruptFile, "encoding width does not match input layer");
  }
  for (auto& x : m.normalization.mean) x = r.f64();
  for (auto& x : m.normalization.stddev) x = r.f64();
  for (std::size_t i = 0; i < kFeatureCount; ++i) m.normalization.constant[i] = r.u8() != 0;
  m.training.seed = r.u64();
  m.training.epochs = r.u32();
  const std::uint32_t curve = r.u32();
  if (r.remaining() / 8 < curve) throw Error(ErrorCode::CorruptFile, "truncated loss curve");
  for (std::uint32_t i = 0; i < curve; ++i) m.training.loss_curve.push_back(r.f64());
  if (r.remaining() != 8) throw Error(ErrorCode::CorruptFile, "trailing bytes after model body");
  return m;
}

inline void save_model(const ModelSnapshot& m, const std::string& path) { write_file(path, serialize_model(m)); }

inline ModelSnapshot load_model(const std::string& path) { return deserialize_model(read_file(path)); }

// Content-derived version stamp, stable across save/load.
inline std::string model_version(const ModelSnapshot& m) { return to_hex(fnv1a64(serialize_model(m))); }

}  // namespace c3po
