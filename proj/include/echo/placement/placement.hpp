// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "echo/core/error.hpp"

namespace echo::placement {

struct DeviceProfile {
  std::string device_id;
  double f_peak = 0.0;  // operations / second
  double m_free = 0.0;  // bytes
};

struct LayerRange {
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  std::size_t size() const { return end - begin; }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

/// Static pipeline plan: stage s runs layers stages[s] on device
/// assignment[s]. Computed once before rollouts and never mutated.
struct StagePlan {
  std::vector<LayerRange> stages;
  std::vector<std::string> assignment;
  std::vector<double> predicted_stage_times;
  std::vector<double> stage_memory;
  double bottleneck = 0.0;
};

namespace detail {

// sums[j][i] = v[j] + ... + v[i-1], accumulated left to right.
inline std::vector<std::vector<double>> range_sums(std::span<const double> v) {
  const auto n = v.size();
  std::vector<std::vector<double>> sums(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = j; i < n; ++i) {
      acc += v[i];
      sums[j][i + 1] = acc;
    }
  }
  return sums;
}

}  // namespace detail

/// Pipeline order of devices: descending f_peak, ties by original position.
inline std::vector<DeviceProfile> pipeline_order(std::span<const DeviceProfile> devices) {
  std::vector<DeviceProfile> ordered(devices.begin(), devices.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const DeviceProfile& a, const DeviceProfile& b) { return a.f_peak > b.f_peak; });
  return ordered;
}

/// Splits L layers into S = devices.size() contiguous non-empty stages so
/// the slowest stage, sum(costs in stage) / f_peak, is as fast as possible,
/// subject to each stage fitting its device's free memory. Exact dynamic
/// programme over (stage, layer prefix), O(L^2 S).
inline StagePlan plan_stages(std::span<const double> layer_costs, std::span<const double> layer_mem,
                             std::span<const DeviceProfile> devices) {
  const std::size_t layers = layer_costs.size();
  const std::size_t stages = devices.size();
  if (layer_mem.size() != layers) throw ContractViolation("layer_costs and layer_mem differ in length");
  if (stages == 0) throw ContractViolation("no devices to place layers on");
  if (stages > layers) {
    throw ContractViolation(std::to_string(stages) + " devices but only " + std::to_string(layers) +
                            " layers");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (!(layer_costs[l] > 0.0) || !std::isfinite(layer_costs[l])) {
      throw ContractViolation("layer " + std::to_string(l) + " cost must be positive");
    }
    if (!(layer_mem[l] >= 0.0) || !std::isfinite(layer_mem[l])) {
      throw ContractViolation("layer " + std::to_string(l) + " memory must be non-negative");
    }
  }
  for (const auto& d : devices) {
    if (!(d.f_peak > 0.0) || !(d.m_free > 0.0)) {
      throw ContractViolation("device " + d.device_id + " needs positive f_peak and m_free");
    }
  }

  const auto order = pipeline_order(devices);
  const double total_mem = std::accumulate(layer_mem.begin(), layer_mem.end(), 0.0);
  double total_free = 0.0;
  double largest_free = 0.0;
  for (const auto& d : order) {
    total_free += d.m_free;
    largest_free = std::max(largest_free, d.m_free);
  }
  if (total_mem > total_free) {
    throw InfeasibleError("binding constraint: total layer memory " + std::to_string(total_mem) +
                          " exceeds total free memory " + std::to_string(total_free));
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (layer_mem[l] > largest_free) {
      throw InfeasibleError("binding constraint: layer " + std::to_string(l) + " needs " +
                            std::to_string(layer_mem[l]) + " bytes, largest device has " +
                            std::to_string(largest_free));
    }
  }

  const auto cost_sum = detail::range_sums(layer_costs);
  const auto mem_sum = detail::range_sums(layer_mem);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // best[s][i]: optimal bottleneck placing the first i layers on stages 0..s-1.
  std::vector<std::vector<double>> best(stages + 1, std::vector<double>(layers + 1, kInf));
  std::vector<std::vector<std::size_t>> split(stages + 1, std::vector<std::size_t>(layers + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t s = 1; s <= stages; ++s) {
    const auto& dev = order[s - 1];
    // Leave at least one layer for each later stage.
    for (std::size_t i = s; i + (stages - s) <= layers; ++i) {
      for (std::size_t j = s - 1; j < i; ++j) {
        if (best[s - 1][j] == kInf || mem_sum[j][i] > dev.m_free) continue;
        const double t = std::max(best[s - 1][j], cost_sum[j][i] / dev.f_peak);
        if (t < best[s][i]) {
          best[s][i] = t;
          split[s][i] = j;
        }
      }
    }
  }
  if (best[stages][layers] == kInf) {
    throw InfeasibleError(
        "binding constraint: per-device memory; no contiguous split of " + std::to_string(layers) +
        " layers over " + std::to_string(stages) + " devices fits every stage in its device's m_free");
  }

  StagePlan plan;
  plan.stages.resize(stages);
  for (std::size_t s = stages, i = layers; s > 0; --s) {
    const std::size_t j = split[s][i];
    plan.stages[s - 1] = LayerRange{j, i};
    i = j;
  }
  for (std::size_t s = 0; s < stages; ++s) {
    const auto& r = plan.stages[s];
    plan.assignment.push_back(order[s].device_id);
    plan.predicted_stage_times.push_back(cost_sum[r.begin][r.end] / order[s].f_peak);
    plan.stage_memory.push_back(mem_sum[r.begin][r.end]);
  }
  plan.bottleneck = best[stages][layers];
  return plan;
}

inline nlohmann::json to_json(const StagePlan& p) {
  nlohmann::json stages = nlohmann::json::array();
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    stages.push_back({{"stage", s},
                      {"layers", {p.stages[s].begin, p.stages[s].end}},
                      {"device_id", p.assignment[s]},
                      {"predicted_time", p.predicted_stage_times[s]},
                      {"memory", p.stage_memory[s]}});
  }
  return {{"stages", std::move(stages)}, {"bottleneck", p.bottleneck}};
}

inline std::string render_table(const StagePlan& p) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-12s %-16s %-14s %-14s\n", "stage", "layers", "device",
                "time", "memory");
  out << line;
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    const std::string range =
        "[" + std::to_string(p.stages[s].begin) + ", " + std::to_string(p.stages[s].end) + ")";
    std::snprintf(line, sizeof line, "%-6zu %-12s %-16s %-14.6g %-14.6g\n", s, range.c_str(),
                  p.assignment[s].c_str(), p.predicted_stage_times[s], p.stage_memory[s]);
    out << line;
  }
  out << "bottleneck: " << p.bottleneck << "\n";
  return out.str();
}

inline std::vector<DeviceProfile> devices_from_json(const nlohmann::json& j) {
  std::vector<DeviceProfile> out;
  try {
    for (const auto& d : j.at("devices")) {
      out.push_back({d.at("device_id").get<std::string>(), d.at("f_peak").get<double>(),
                     d.at("m_free").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad device manifest: ") + e.what());
  }
  return out;
}

inline nlohmann::json to_json(const DeviceProfile& d) {
  return {{"device_id", d.device_id}, {"f_peak", d.f_peak}, {"m_free", d.m_free}};
}

struct LayerManifest {
  std::vector<double> costs;
  std::vector<double> mem;
};

/// {"layer_costs": [...], "layer_mem": [...]}; layer_mem defaults to zeros.
inline LayerManifest layers_from_json(const nlohmann::json& j) {
  LayerManifest m;
  try {
    j.at("layer_costs").get_to(m.costs);
    if (j.contains("layer_mem")) {
      j.at("layer_mem").get_to(m.mem);
    } else {
      m.mem.assign(m.costs.size(), 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad layer manifest: ") + e.what());
  }
  return m;
}

}  // namespace echo::placement
