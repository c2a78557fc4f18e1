// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "echo/core/error.hpp"
#include "echo/placement/placement.hpp"

namespace echo::placement {

/// Parses a "f=10,m=1000" fixed-profile override.
inline DeviceProfile parse_fixed_profile(const std::string& spec, std::string device_id = "fixed") {
  DeviceProfile d{std::move(device_id), 0.0, 0.0};
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw SchemaError("fixed profile item '" + item + "' lacks '='");
    const auto key = item.substr(0, eq);
    double value = 0.0;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw SchemaError("fixed profile value in '" + item + "' is not a number");
    }
    if (key == "f") {
      d.f_peak = value;
    } else if (key == "m") {
      d.m_free = value;
    } else {
      throw SchemaError("fixed profile key must be f or m, got '" + key + "'");
    }
  }
  if (!(d.f_peak > 0.0) || !(d.m_free > 0.0)) throw SchemaError("fixed profile needs f > 0 and m > 0");
  return d;
}

inline double physical_memory_bytes() {
  return static_cast<double>(sysconf(_SC_PHYS_PAGES)) * static_cast<double>(sysconf(_SC_PAGESIZE));
}

inline double available_memory_bytes() {
  std::ifstream meminfo("/proc/meminfo");
  std::string key;
  double kb = 0.0;
  std::string unit;
  while (meminfo >> key >> kb >> unit) {
    if (key == "MemAvailable:") return kb * 1024.0;
  }
  return static_cast<double>(sysconf(_SC_AVPHYS_PAGES)) * static_cast<double>(sysconf(_SC_PAGESIZE));
}

/// Times a dense matrix product (2 n^3 flops per pass) for at least
/// `min_seconds` and reports flops/s plus MemAvailable.
inline DeviceProfile measure_device(std::string device_id = "local", double min_seconds = 0.05) {
  constexpr std::size_t n = 96;
  std::vector<double> a(n * n, 1.0001), b(n * n, 0.9999), c(n * n, 0.0);
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::size_t passes = 0;
  double elapsed = 0.0;
  do {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double aik = a[i * n + k];
        for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
      }
    }
    ++passes;
    elapsed = std::chrono::duration<double>(clock::now() - start).count();
  } while (elapsed < min_seconds);
  volatile double sink = c[n + 1];
  (void)sink;
  const double flops = 2.0 * n * n * n * static_cast<double>(passes);
  return DeviceProfile{std::move(device_id), flops / elapsed, available_memory_bytes()};
}

/// Measured profile, or the parsed `fixed_profile` override when given.
/// A failing measurement yields nullopt so the caller can exclude the device.
inline std::optional<DeviceProfile> probe_device(const std::optional<std::string>& fixed_profile = {},
                                                 std::string device_id = "local") {
  if (fixed_profile) return parse_fixed_profile(*fixed_profile, std::move(device_id));
  try {
    auto d = measure_device(std::move(device_id));
    if (!(d.f_peak > 0.0) || !(d.m_free > 0.0)) return std::nullopt;
    return d;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace echo::placement
