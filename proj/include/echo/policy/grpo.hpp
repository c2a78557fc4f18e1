// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "echo/core/error.hpp"
#include "echo/core/run_config.hpp"
#include "echo/core/trajectory.hpp"
#include "echo/env/features.hpp"
#include "echo/policy/matrix.hpp"
#include "echo/policy/policy.hpp"

namespace echo::policy {

inline constexpr double kAdvantageEpsilon = 1e-8;

/// The rollouts sampled for one prompt, over which advantages are
/// normalised.
struct GrpoGroup {
  std::uint64_t prompt_id = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> returns;  // returns[i] == trajectories[i].total_reward()
};

inline GrpoGroup make_group(std::uint64_t prompt_id, std::vector<Trajectory> trajectories) {
  GrpoGroup g{prompt_id, std::move(trajectories), {}};
  g.returns.reserve(g.trajectories.size());
  for (const auto& t : g.trajectories) g.returns.push_back(t.total_reward());
  return g;
}

/// Group-relative advantages: (R_i - mean R) / (std R + 1e-8) with the
/// population standard deviation.
inline std::vector<double> grpo_advantages(std::span<const double> returns) {
  if (returns.size() < 2) throw ContractViolation("GRPO group needs at least 2 trajectories");
  const double n = static_cast<double>(returns.size());
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= n;
  // One correction pass: a tied group must come back with exactly zero
  // residuals, or the 1e-8 floor turns rounding noise into advantages.
  double residual = 0.0;
  for (double r : returns) residual += r - mean;
  mean += residual / n;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  const double stddev = std::sqrt(var / n);
  std::vector<double> adv;
  adv.reserve(returns.size());
  for (double r : returns) adv.push_back((r - mean) / (stddev + kAdvantageEpsilon));
  return adv;
}

inline std::vector<double> grpo_advantages(const GrpoGroup& g) {
  if (g.returns.size() != g.trajectories.size()) {
    throw ContractViolation("group returns and trajectories differ in length");
  }
  return grpo_advantages(std::span<const double>(g.returns));
}

struct SurrogateResult {
  double objective = 0.0;
  Matrix gradient;  // d objective / d effective weights
  std::size_t tokens = 0;
  std::size_t sequences = 0;
  double max_abs_logit = 0.0;
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = 0.0;
};

/// Clipped surrogate with a k1 KL penalty, averaged over the steps of each
/// trajectory and then over trajectories:
///
///   J = 1/N * sum_i 1/|o_i| * sum_t [ min(rho * A_i, clip(rho, 1-eps, 1+eps) * A_i)
///                                    - kl_coef * (logp_old - logp_new) ]
///
/// with rho = exp(logp_new - logp_old), logp_old the recorded behaviour
/// log-probability and A the group advantage of the token's trajectory.
inline SurrogateResult grpo_surrogate(const Matrix& w, std::span<const GrpoGroup> batch,
                                      const env::FeatureSpec& spec, double clip_eps,
                                      double kl_coef) {
  SurrogateResult out;
  out.gradient = Matrix(w.rows(), w.cols());
  std::vector<double> probs(w.rows());
  for (const auto& group : batch) {
    const auto adv = grpo_advantages(group);
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const auto& t = group.trajectories[i];
      const double wt = t.length() > 0 ? 1.0 / static_cast<double>(t.length()) : 0.0;
      ++out.sequences;
      for (std::size_t s = 0; s < t.length(); ++s) {
        const auto x = env::one_hot_features(t.tokens[s], spec);
        const auto z = logits(w, x);
        for (double v : z) out.max_abs_logit = std::max(out.max_abs_logit, std::abs(v));
        const auto lp = action_logprobs(w, x);
        const auto a = static_cast<std::size_t>(t.actions[s]);
        if (a >= lp.size()) throw ContractViolation("recorded action out of range");
        const double ratio = std::exp(lp[a] - t.logprobs[s]);
        out.min_ratio = std::min(out.min_ratio, ratio);
        out.max_ratio = std::max(out.max_ratio, ratio);
        const double unclipped = ratio * adv[i];
        const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv[i];
        const bool unclipped_active = unclipped <= clipped;
        out.objective += wt * (std::min(unclipped, clipped) - kl_coef * (t.logprobs[s] - lp[a]));

        // d/dz_k log pi(a) = [k == a] - pi(k)
        const double coef = wt * ((unclipped_active ? adv[i] * ratio : 0.0) + kl_coef);
        for (std::size_t k = 0; k < lp.size(); ++k) probs[k] = std::exp(lp[k]);
        for (std::size_t k = 0; k < w.rows(); ++k) {
          const double dz = coef * ((k == a ? 1.0 : 0.0) - probs[k]);
          for (std::size_t j = 0; j < x.size(); ++j) {
            if (x[j] != 0.0) out.gradient(k, j) += dz * x[j];
          }
        }
        ++out.tokens;
      }
    }
  }
  if (out.sequences > 0) {
    const double inv = 1.0 / static_cast<double>(out.sequences);
    out.objective *= inv;
    for (double& g : out.gradient.data()) g *= inv;
  }
  return out;
}

/// One plain-SGD ascent step on the surrogate over the whole batch. Returns
/// the new parameters with version + 1. In adapter mode only A and B move.
inline PolicyParams grpo_update(const PolicyParams& p, std::span<const GrpoGroup> batch,
                                const RunConfig& cfg, const env::FeatureSpec& spec) {
  const Matrix w = effective_weights(p);
  const auto res = grpo_surrogate(w, batch, spec, cfg.clip_eps, cfg.kl_coef);
  if (!res.gradient.all_finite()) {
    std::ostringstream msg;
    msg << "non-finite GRPO gradient at version " << p.version.value
        << " (max |logit| = " << res.max_abs_logit << ", ratio range [" << res.min_ratio
        << ", " << res.max_ratio << "])";
    throw DivergenceError(msg.str());
  }

  PolicyParams next = p;
  next.version = p.version.next();
  if (cfg.learning_rate == 0.0) return next;

  if (!p.adapter) {
    next.weights.add_scaled(res.gradient, cfg.learning_rate);
  } else {
    // W_eff = base + s * A * B  =>  dJ/dA = s * G * B^T,  dJ/dB = s * A^T * G
    const auto& ad = *p.adapter;
    const double s = ad.scale();
    const Matrix grad_a = matmul(res.gradient, transpose(ad.b));
    const Matrix grad_b = matmul(transpose(ad.a), res.gradient);
    next.adapter->a.add_scaled(grad_a, cfg.learning_rate * s);
    next.adapter->b.add_scaled(grad_b, cfg.learning_rate * s);
  }
  if (!next.weights.all_finite() ||
      (next.adapter && (!next.adapter->a.all_finite() || !next.adapter->b.all_finite()))) {
    throw DivergenceError("parameters became non-finite at version " + next.version.str());
  }
  return next;
}

}  // namespace echo::policy
