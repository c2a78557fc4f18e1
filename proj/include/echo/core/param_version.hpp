// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "echo/core/error.hpp"

namespace echo {

/// Policy checkpoint identifier: the number of optimisation steps applied to
/// the initial policy. Version 0 is the untrained policy and every published
/// snapshot carries previous + 1.
struct ParamVersion {
  std::uint64_t value = 0;

  constexpr ParamVersion() = default;
  constexpr explicit ParamVersion(std::uint64_t v) : value(v) {}

  constexpr ParamVersion next() const { return ParamVersion{value + 1}; }

  constexpr auto operator<=>(const ParamVersion&) const = default;

  std::string str() const { return std::to_string(value); }
};

/// Absolute numeric distance between two versions.
constexpr std::uint64_t distance(ParamVersion a, ParamVersion b) {
  return a.value > b.value ? a.value - b.value : b.value - a.value;
}

// The trajectory API carries `param_version` as a string; control-plane
// fields use plain integers. Parsing accepts either form.
inline nlohmann::json version_to_wire(ParamVersion v) { return v.str(); }

inline ParamVersion version_from_wire(const nlohmann::json& j) {
  if (j.is_number_unsigned()) return ParamVersion{j.get<std::uint64_t>()};
  if (j.is_number_integer()) {
    auto v = j.get<std::int64_t>();
    if (v < 0) throw SchemaError("param_version must be non-negative");
    return ParamVersion{static_cast<std::uint64_t>(v)};
  }
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
      throw SchemaError("param_version is not a decimal integer: '" + s + "'");
    }
    return ParamVersion{v};
  }
  throw SchemaError("param_version must be a string or integer");
}

}  // namespace echo
