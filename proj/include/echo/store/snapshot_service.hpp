// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "echo/net/http.hpp"
#include "echo/store/snapshot_store.hpp"

namespace echo::store {

inline constexpr const char* kChecksumHeader = "X-Checksum-Sha256";
inline constexpr const char* kKindHeader = "X-Snapshot-Kind";
inline constexpr const char* kBaseHeader = "X-Base-Version";
inline constexpr const char* kPublishedAtHeader = "X-Published-At";

namespace detail {

inline ParamVersion version_segment(const std::string& s) { return version_from_wire(nlohmann::json(s)); }

}  // namespace detail

/// HTTP front end for a SnapshotStore.
class SnapshotService : public net::Service {
 public:
  explicit SnapshotService(SnapshotStore& store) : store_(store) {
    auto& s = server();
    add_health("snapshot-store");
    s.Get("/v1/snapshots/latest", [this](const httplib::Request&, httplib::Response& res) {
      net::guarded(res, [&] { net::write_json(res, 200, metadata_json(store_.fetch_latest())); });
    });
    s.Get(R"(/v1/snapshots/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto snap = store_.fetch(detail::version_segment(req.matches[1]));
        res.set_header(kChecksumHeader, snap.checksum);
        res.set_header(kKindHeader, policy::to_string(snap.kind));
        res.set_header(kPublishedAtHeader, std::to_string(snap.published_at));
        if (snap.base_version) res.set_header(kBaseHeader, snap.base_version->str());
        res.status = 200;
        res.set_content(snap.payload, "application/octet-stream");
      });
    });
    s.Put(R"(/v1/snapshots/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        if (!req.has_header(kChecksumHeader)) throw SchemaError(std::string("missing ") + kChecksumHeader + " header");
        PolicySnapshot snap;
        snap.version = detail::version_segment(req.matches[1]);
        snap.kind = req.has_header(kKindHeader)
                        ? policy::snapshot_kind_from_string(req.get_header_value(kKindHeader))
                        : SnapshotKind::kFull;
        if (req.has_header(kBaseHeader)) snap.base_version = detail::version_segment(req.get_header_value(kBaseHeader));
        snap.payload = req.body;
        snap.checksum = req.get_header_value(kChecksumHeader);
        snap.published_at = wall_clock_ms();
        store_.publish(snap);
        net::write_json(res, 201, metadata_json(snap));
      });
    });
    s.Post("/v1/snapshots/gc", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto keep = net::parse_body(req).at("keep_last").get<std::size_t>();
        net::write_json(res, 200, {{"deleted", store_.gc(keep)}});
      });
    });
  }

  ~SnapshotService() override { stop(); }

 private:
  SnapshotStore& store_;
};

struct SnapshotMetadata {
  ParamVersion version;
  SnapshotKind kind = SnapshotKind::kFull;
  std::optional<ParamVersion> base_version;
  std::string checksum;
};

class SnapshotClient {
 public:
  explicit SnapshotClient(net::Url url) : http_(std::move(url)) {}

  void publish(const PolicySnapshot& s) const {
    httplib::Headers h{{kChecksumHeader, s.checksum}, {kKindHeader, policy::to_string(s.kind)}};
    if (s.base_version) h.emplace(kBaseHeader, s.base_version->str());
    const auto r = http_.request("PUT", "/v1/snapshots/" + s.version.str(), s.payload, "application/octet-stream", h);
    if (r.status != 201) net::raise_remote(r.status, r.body, "publish v" + s.version.str());
  }

  /// Fetches and verifies the bytes of version v.
  PolicySnapshot fetch(ParamVersion v) const {
    const auto r = http_.request("GET", "/v1/snapshots/" + v.str());
    if (r.status != 200) net::raise_remote(r.status, r.body, "fetch v" + v.str());
    PolicySnapshot s;
    s.version = v;
    s.kind = policy::snapshot_kind_from_string(r.header(kKindHeader));
    if (const auto b = r.header(kBaseHeader); !b.empty()) s.base_version = detail::version_segment(b);
    s.payload = r.body;
    s.checksum = r.header(kChecksumHeader);
    const auto at = r.header(kPublishedAtHeader);
    s.published_at = at.empty() ? 0 : std::stoll(at);
    return s;
  }

  /// Metadata of the newest version, or nullopt for an empty store.
  std::optional<SnapshotMetadata> latest() const {
    const auto r = http_.request("GET", "/v1/snapshots/latest");
    if (r.status == 404) return std::nullopt;
    if (r.status != 200) net::raise_remote(r.status, r.body, "latest");
    const auto j = nlohmann::json::parse(r.body);
    SnapshotMetadata m;
    m.version = ParamVersion{j.at("version").get<std::uint64_t>()};
    m.kind = policy::snapshot_kind_from_string(j.at("kind").get<std::string>());
    if (!j.at("base_version").is_null()) m.base_version = ParamVersion{j.at("base_version").get<std::uint64_t>()};
    m.checksum = j.at("checksum").get<std::string>();
    return m;
  }

  std::size_t gc(std::size_t keep_last) const {
    return http_.call("POST", "/v1/snapshots/gc", {{"keep_last", keep_last}}).at("deleted").get<std::size_t>();
  }

  const net::Url& url() const { return http_.url(); }

 private:
  net::Client http_;
};

}  // namespace echo::store
