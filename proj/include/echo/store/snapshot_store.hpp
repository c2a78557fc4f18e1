// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "echo/core/byte_codec.hpp"
#include "echo/core/checksum.hpp"
#include "echo/core/clock.hpp"
#include "echo/core/error.hpp"
#include "echo/core/param_version.hpp"
#include "echo/policy/snapshot_codec.hpp"

namespace echo::store {

using policy::SnapshotKind;

/// A published checkpoint. `checksum` is the hex SHA-256 of `payload`.
struct PolicySnapshot {
  ParamVersion version;
  SnapshotKind kind = SnapshotKind::kFull;
  std::optional<ParamVersion> base_version;  // set iff kind == kLoraDelta
  std::string payload;
  std::string checksum;
  std::int64_t published_at = 0;

  bool verifies() const { return sha256_hex(payload) == checksum; }
};

inline PolicySnapshot make_snapshot(ParamVersion version, SnapshotKind kind, std::string payload,
                                    std::optional<ParamVersion> base_version = {}) {
  PolicySnapshot s;
  s.version = version;
  s.kind = kind;
  s.base_version = base_version;
  s.checksum = sha256_hex(payload);
  s.payload = std::move(payload);
  s.published_at = wall_clock_ms();
  return s;
}

inline nlohmann::json metadata_json(const PolicySnapshot& s) {
  nlohmann::json j{{"version", s.version.value},
                   {"kind", policy::to_string(s.kind)},
                   {"checksum", s.checksum},
                   {"published_at", s.published_at},
                   {"size", s.payload.size()}};
  j["base_version"] = s.base_version ? nlohmann::json(s.base_version->value) : nlohmann::json(nullptr);
  return j;
}

/// Versioned checkpoint store. Versions are published gaplessly from 0;
/// publication is atomic and fetches return the exact published bytes.
/// With a data directory every change is appended to `snapshots.log` and
/// replayed on construction.
class SnapshotStore {
 public:
  SnapshotStore() = default;

  explicit SnapshotStore(const std::filesystem::path& data_dir) : log_path_(data_dir / "snapshots.log") {
    std::filesystem::create_directories(data_dir);
    replay_log();
  }

  /// Throws ConflictError unless s.version == latest + 1 (0 for an empty
  /// store), ChecksumError if the digest does not match, NotFoundError if a
  /// lora_delta names a base that is not a stored full snapshot.
  void publish(PolicySnapshot s) {
    if (!s.verifies()) {
      throw ChecksumError("snapshot v" + s.version.str() + " payload does not match its checksum");
    }
    if (s.kind == SnapshotKind::kLoraDelta && !s.base_version) {
      throw SchemaError("lora_delta snapshot v" + s.version.str() + " lacks base_version");
    }
    std::unique_lock lock(mutex_);
    const ParamVersion expected = latest_ ? latest_->next() : ParamVersion{0};
    if (s.version != expected) {
      throw ConflictError("cannot publish v" + s.version.str() + ": store expects v" + expected.str());
    }
    if (s.kind == SnapshotKind::kLoraDelta) {
      auto it = snapshots_.find(*s.base_version);
      if (it == snapshots_.end() || it->second.kind != SnapshotKind::kFull) {
        throw NotFoundError("lora_delta v" + s.version.str() + " names base v" + s.base_version->str() +
                            " which is not a stored full snapshot");
      }
    }
    append_put(s);
    latest_ = s.version;
    snapshots_.emplace(s.version, std::move(s));
  }

  PolicySnapshot fetch(ParamVersion v) const {
    std::shared_lock lock(mutex_);
    auto it = snapshots_.find(v);
    if (it == snapshots_.end()) throw NotFoundError("snapshot v" + v.str() + " not found");
    return it->second;
  }

  PolicySnapshot fetch_latest() const {
    std::shared_lock lock(mutex_);
    if (!latest_) throw NotFoundError("snapshot store is empty");
    return snapshots_.at(*latest_);
  }

  std::optional<ParamVersion> latest() const {
    std::shared_lock lock(mutex_);
    return latest_;
  }

  std::vector<ParamVersion> versions() const {
    std::shared_lock lock(mutex_);
    std::vector<ParamVersion> out;
    for (const auto& [v, _] : snapshots_) out.push_back(v);
    return out;
  }

  /// Keeps the newest `keep_last` versions plus the bases their deltas need.
  std::size_t gc(std::size_t keep_last) {
    if (keep_last == 0) throw ContractViolation("gc keep_last must be >= 1");
    std::unique_lock lock(mutex_);
    std::set<ParamVersion> keep;
    std::size_t kept = 0;
    for (auto it = snapshots_.rbegin(); it != snapshots_.rend() && kept < keep_last; ++it, ++kept) {
      keep.insert(it->first);
      if (it->second.base_version) keep.insert(*it->second.base_version);
    }
    std::size_t deleted = 0;
    for (auto it = snapshots_.begin(); it != snapshots_.end();) {
      if (keep.contains(it->first)) {
        ++it;
        continue;
      }
      append_gc(it->first);
      it = snapshots_.erase(it);
      ++deleted;
    }
    return deleted;
  }

 private:
  static constexpr std::string_view kRecordMagic = "ECHOSNAP";

  void append_record(const nlohmann::json& header, std::string_view payload) {
    if (!log_path_) return;
    const auto h = header.dump();
    ByteWriter w;
    w.raw(kRecordMagic);
    w.u32(static_cast<std::uint32_t>(h.size()));
    w.raw(h);
    w.u64(payload.size());
    w.raw(payload);
    std::ofstream out(*log_path_, std::ios::binary | std::ios::app);
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    out.flush();
    if (!out) throw Error("failed to append to " + log_path_->string());
  }

  void append_put(const PolicySnapshot& s) {
    auto h = metadata_json(s);
    h["op"] = "put";
    append_record(h, s.payload);
  }

  void append_gc(ParamVersion v) { append_record({{"op", "gc"}, {"version", v.value}}, {}); }

  void replay_log() {
    std::ifstream in(*log_path_, std::ios::binary);
    if (!in) return;
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(bytes);
    while (!r.done()) {
      if (r.raw(kRecordMagic.size()) != kRecordMagic) throw SchemaError("corrupt snapshot log");
      const auto header = nlohmann::json::parse(r.raw(r.u32()));
      const auto payload = r.raw(r.u64());
      const ParamVersion v{header.at("version").get<std::uint64_t>()};
      if (header.at("op") == "gc") {
        snapshots_.erase(v);
        continue;
      }
      PolicySnapshot s;
      s.version = v;
      s.kind = policy::snapshot_kind_from_string(header.at("kind").get<std::string>());
      if (!header.at("base_version").is_null()) {
        s.base_version = ParamVersion{header.at("base_version").get<std::uint64_t>()};
      }
      s.payload = std::string(payload);
      s.checksum = header.at("checksum").get<std::string>();
      s.published_at = header.at("published_at").get<std::int64_t>();
      if (!s.verifies()) throw ChecksumError("snapshot log record v" + v.str() + " is corrupt");
      latest_ = v;
      snapshots_[v] = std::move(s);
    }
  }

  mutable std::shared_mutex mutex_;
  std::map<ParamVersion, PolicySnapshot> snapshots_;
  std::optional<ParamVersion> latest_;
  std::optional<std::filesystem::path> log_path_;
};

}  // namespace echo::store
