// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "echo/core/error.hpp"
#include "echo/core/param_version.hpp"
#include "echo/policy/policy.hpp"

namespace echo::trainer {

/// Where one consumed trajectory came from and how stale it was.
struct LedgerEntry {
  std::string worker_id;
  std::uint64_t prompt_id = 0;
  ParamVersion param_version;
  std::uint64_t sequence_no = 0;
  std::uint32_t offset = 0;
  std::uint64_t staleness = 0;  // t_train at consumption - param_version
};

/// One optimisation step. `version` is the version the step produced.
struct StepRecord {
  std::uint64_t step = 0;
  ParamVersion version;
  double mean_return = 0.0;
  std::map<std::uint64_t, std::uint64_t> staleness_histogram;
  std::int64_t wall_ms = 0;
  std::vector<LedgerEntry> ledger;
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  // trail[v] holds the parameters of version v, starting with v0.
  std::vector<policy::PolicyParams> trail;
};

inline nlohmann::json to_json(const LedgerEntry& e) {
  return {{"worker_id", e.worker_id},     {"prompt_id", e.prompt_id}, {"param_version", e.param_version.value},
          {"sequence_no", e.sequence_no}, {"offset", e.offset},       {"staleness", e.staleness}};
}

inline LedgerEntry ledger_entry_from_json(const nlohmann::json& j) {
  return {j.at("worker_id").get<std::string>(),   j.at("prompt_id").get<std::uint64_t>(),
          version_from_wire(j.at("param_version")), j.at("sequence_no").get<std::uint64_t>(),
          j.at("offset").get<std::uint32_t>(),    j.at("staleness").get<std::uint64_t>()};
}

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [k, n] : r.staleness_histogram) hist[std::to_string(k)] = n;
  nlohmann::json ledger = nlohmann::json::array();
  for (const auto& e : r.ledger) ledger.push_back(to_json(e));
  return {{"step", r.step},
          {"version", r.version.value},
          {"mean_return", r.mean_return},
          {"staleness_histogram", hist},
          {"wall_ms", r.wall_ms},
          {"ledger", ledger}};
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::uint64_t>();
  r.version = version_from_wire(j.at("version"));
  r.mean_return = j.at("mean_return").get<double>();
  for (const auto& [k, n] : j.at("staleness_histogram").items()) r.staleness_histogram[std::stoull(k)] = n;
  r.wall_ms = j.at("wall_ms").get<std::int64_t>();
  if (j.contains("ledger")) {
    for (const auto& e : j.at("ledger")) r.ledger.push_back(ledger_entry_from_json(e));
  }
  return r;
}

inline void write_jsonl(const std::string& path, const std::vector<StepRecord>& steps) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& r : steps) out << to_json(r).dump() << '\n';
}

inline std::vector<StepRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read " + path);
  std::vector<StepRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(step_record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

/// Every parameter of a policy, flattened: weights, then A and B if present.
inline std::vector<double> flatten(const policy::PolicyParams& p) {
  std::vector<double> out(p.weights.data().begin(), p.weights.data().end());
  if (p.adapter) {
    out.insert(out.end(), p.adapter->a.data().begin(), p.adapter->a.data().end());
    out.insert(out.end(), p.adapter->b.data().begin(), p.adapter->b.data().end());
  }
  return out;
}

namespace detail {

inline nlohmann::json matrix_json(const policy::Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

inline policy::Matrix matrix_from_json(const nlohmann::json& j) {
  policy::Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.data().size()) throw SchemaError("matrix data does not match its shape");
  std::copy(data.begin(), data.end(), m.data().begin());
  return m;
}

}  // namespace detail

/// Parameter trail as JSON. Doubles are written with round-trip precision,
/// so reading a trail back reproduces every parameter bit for bit.
inline nlohmann::json trail_to_json(const std::vector<policy::PolicyParams>& trail) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : trail) {
    nlohmann::json e{{"version", p.version.value}, {"weights", detail::matrix_json(p.weights)}};
    if (p.adapter) {
      e["adapter"] = {{"alpha", p.adapter->alpha},
                      {"a", detail::matrix_json(p.adapter->a)},
                      {"b", detail::matrix_json(p.adapter->b)}};
    } else {
      e["adapter"] = nullptr;
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<policy::PolicyParams> trail_from_json(const nlohmann::json& j) {
  std::vector<policy::PolicyParams> out;
  for (const auto& e : j) {
    policy::PolicyParams p;
    p.version = ParamVersion{e.at("version").get<std::uint64_t>()};
    p.weights = detail::matrix_from_json(e.at("weights"));
    if (!e.at("adapter").is_null()) {
      const auto& a = e.at("adapter");
      p.adapter = policy::LoraAdapter{detail::matrix_from_json(a.at("a")), detail::matrix_from_json(a.at("b")),
                                      a.at("alpha").get<double>()};
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_trail(const std::string& path, const std::vector<policy::PolicyParams>& trail) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << trail_to_json(trail).dump();
}

inline std::vector<policy::PolicyParams> read_trail(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read " + path);
  return trail_from_json(nlohmann::json::parse(in));
}

}  // namespace echo::trainer
