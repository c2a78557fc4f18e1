// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "echo/core/error.hpp"
#include "echo/core/trajectory.hpp"
#include "echo/env/features.hpp"

namespace echo::env {

// Single-step bandit for fast tests: one state, arm a pays a / (arms - 1).
struct BanditState {
  bool done = false;
  friend bool operator==(const BanditState&, const BanditState&) = default;
};

class Bandit {
 public:
  explicit Bandit(std::uint32_t arms = 4) : arms_(arms) {
    if (arms < 2) throw ContractViolation("bandit needs at least 2 arms");
  }

  std::uint32_t arms() const { return arms_; }

  BanditState reset(std::uint64_t /*seed*/) const { return {}; }

  double payoff(std::int32_t arm) const {
    if (arm < 0 || static_cast<std::uint32_t>(arm) >= arms_) {
      throw ContractViolation("bandit arm out of range");
    }
    return static_cast<double>(arm) / static_cast<double>(arms_ - 1);
  }

  double step(BanditState& s, std::int32_t arm) const {
    if (s.done) throw ContractViolation("step() called on a finished bandit episode");
    s.done = true;
    return payoff(arm);
  }

  static StateEncoding encode(const BanditState&) { return {0}; }
  static FeatureSpec feature_spec() { return FeatureSpec{1, 1}; }

 private:
  std::uint32_t arms_;
};

}  // namespace echo::env
