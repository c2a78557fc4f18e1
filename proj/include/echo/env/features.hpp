// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "echo/core/error.hpp"
#include "echo/core/trajectory.hpp"

namespace echo::env {

/// Shape of a state encoding: `token_length` cells, each one of
/// `categories` values. The policy sees the flattened one-hot expansion.
struct FeatureSpec {
  std::uint32_t token_length = 1;
  std::uint32_t categories = 1;

  std::uint32_t dim() const { return token_length * categories; }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

inline std::vector<double> one_hot_features(const StateEncoding& token,
                                            const FeatureSpec& spec) {
  if (token.size() != spec.token_length) {
    throw ContractViolation("state encoding has " + std::to_string(token.size()) +
                            " cells, expected " +
                            std::to_string(spec.token_length));
  }
  std::vector<double> x(spec.dim(), 0.0);
  for (std::size_t i = 0; i < token.size(); ++i) {
    const auto c = token[i];
    if (c < 0 || static_cast<std::uint32_t>(c) >= spec.categories) {
      throw ContractViolation("cell category out of range");
    }
    x[i * spec.categories + static_cast<std::size_t>(c)] = 1.0;
  }
  return x;
}

}  // namespace echo::env
