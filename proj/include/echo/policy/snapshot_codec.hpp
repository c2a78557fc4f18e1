// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "echo/core/byte_codec.hpp"
#include "echo/core/error.hpp"
#include "echo/core/param_version.hpp"
#include "echo/policy/policy.hpp"

namespace echo::policy {

// Binary payloads, little-endian:
//
//   full:       "ECHOPOL1" u8=0 u64 version u32 rows u32 cols f64[rows*cols] weights
//               u8 has_adapter [u32 rank f64 alpha f64[rows*rank] A f64[rank*cols] B]
//   lora_delta: "ECHOPOL1" u8=1 u64 version u64 base_version u32 rows u32 cols
//               u32 rank f64 alpha f64[rows*rank] A f64[rank*cols] B
//
// Doubles are stored as raw IEEE-754 bits, so decoding is exact.
inline constexpr std::string_view kPayloadMagic = "ECHOPOL1";

enum class SnapshotKind : std::uint8_t { kFull = 0, kLoraDelta = 1 };

inline std::string to_string(SnapshotKind k) { return k == SnapshotKind::kFull ? "full" : "lora_delta"; }

inline SnapshotKind snapshot_kind_from_string(std::string_view s) {
  if (s == "full") return SnapshotKind::kFull;
  if (s == "lora_delta") return SnapshotKind::kLoraDelta;
  throw SchemaError("unknown snapshot kind '" + std::string(s) + "'");
}

namespace detail {

inline void write_matrix_data(ByteWriter& w, const Matrix& m) { w.f64s(m.data()); }

inline Matrix read_matrix(ByteReader& r, std::size_t rows, std::size_t cols) {
  if (rows != 0 && cols > r.remaining() / 8 / rows) throw SchemaError("matrix larger than payload");
  Matrix m(rows, cols);
  for (double& v : m.data()) v = r.f64();
  return m;
}

inline SnapshotKind read_header(ByteReader& r) {
  if (r.raw(kPayloadMagic.size()) != kPayloadMagic) throw SchemaError("bad snapshot magic");
  const auto kind = r.u8();
  if (kind > 1) throw SchemaError("bad snapshot kind byte");
  return static_cast<SnapshotKind>(kind);
}

}  // namespace detail

inline std::string encode_full(const PolicyParams& p) {
  ByteWriter w;
  w.raw(kPayloadMagic);
  w.u8(static_cast<std::uint8_t>(SnapshotKind::kFull));
  w.u64(p.version.value);
  w.u32(static_cast<std::uint32_t>(p.weights.rows()));
  w.u32(static_cast<std::uint32_t>(p.weights.cols()));
  detail::write_matrix_data(w, p.weights);
  w.u8(p.adapter ? 1 : 0);
  if (p.adapter) {
    w.u32(static_cast<std::uint32_t>(p.adapter->rank()));
    w.f64(p.adapter->alpha);
    detail::write_matrix_data(w, p.adapter->a);
    detail::write_matrix_data(w, p.adapter->b);
  }
  return std::move(w).take();
}

/// Adapter-only payload; the frozen base weights come from `base_version`.
inline std::string encode_lora_delta(const PolicyParams& p, ParamVersion base_version) {
  if (!p.adapter) throw ContractViolation("lora_delta snapshot needs adapter mode");
  ByteWriter w;
  w.raw(kPayloadMagic);
  w.u8(static_cast<std::uint8_t>(SnapshotKind::kLoraDelta));
  w.u64(p.version.value);
  w.u64(base_version.value);
  w.u32(static_cast<std::uint32_t>(p.weights.rows()));
  w.u32(static_cast<std::uint32_t>(p.weights.cols()));
  w.u32(static_cast<std::uint32_t>(p.adapter->rank()));
  w.f64(p.adapter->alpha);
  detail::write_matrix_data(w, p.adapter->a);
  detail::write_matrix_data(w, p.adapter->b);
  return std::move(w).take();
}

inline SnapshotKind payload_kind(std::string_view bytes) {
  ByteReader r(bytes);
  return detail::read_header(r);
}

inline PolicyParams decode_full(std::string_view bytes) {
  ByteReader r(bytes);
  if (detail::read_header(r) != SnapshotKind::kFull) throw SchemaError("payload is not a full snapshot");
  PolicyParams p;
  p.version = ParamVersion{r.u64()};
  const auto rows = r.u32();
  const auto cols = r.u32();
  p.weights = detail::read_matrix(r, rows, cols);
  if (r.u8() != 0) {
    LoraAdapter ad;
    const auto rank = r.u32();
    ad.alpha = r.f64();
    ad.a = detail::read_matrix(r, rows, rank);
    ad.b = detail::read_matrix(r, rank, cols);
    p.adapter = std::move(ad);
  }
  if (!r.done()) throw SchemaError("trailing bytes after full snapshot");
  return p;
}

struct LoraDelta {
  ParamVersion version;
  ParamVersion base_version;
  std::size_t rows = 0;
  std::size_t cols = 0;
  LoraAdapter adapter;
};

inline LoraDelta decode_lora_delta(std::string_view bytes) {
  ByteReader r(bytes);
  if (detail::read_header(r) != SnapshotKind::kLoraDelta) {
    throw SchemaError("payload is not a lora_delta snapshot");
  }
  LoraDelta d;
  d.version = ParamVersion{r.u64()};
  d.base_version = ParamVersion{r.u64()};
  d.rows = r.u32();
  d.cols = r.u32();
  const auto rank = r.u32();
  d.adapter.alpha = r.f64();
  d.adapter.a = detail::read_matrix(r, d.rows, rank);
  d.adapter.b = detail::read_matrix(r, rank, d.cols);
  if (!r.done()) throw SchemaError("trailing bytes after lora_delta snapshot");
  return d;
}

/// Rebuilds full parameters from a base snapshot and an adapter delta.
inline PolicyParams apply_delta(const PolicyParams& base, const LoraDelta& delta) {
  if (base.weights.rows() != delta.rows || base.weights.cols() != delta.cols) {
    throw ContractViolation("lora_delta v" + delta.version.str() + " shape does not match base v" +
                            base.version.str());
  }
  PolicyParams p;
  p.weights = base.weights;
  p.adapter = delta.adapter;
  p.version = delta.version;
  return p;
}

}  // namespace echo::policy
