// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "echo/core/error.hpp"
#include "echo/core/param_version.hpp"
#include "echo/core/rng.hpp"
#include "echo/core/run_config.hpp"
#include "echo/policy/matrix.hpp"

namespace echo::policy {

/// Low-rank adapter: delta = (alpha / rank) * A * B with A [actions x rank]
/// and B [rank x features].
struct LoraAdapter {
  Matrix a;
  Matrix b;
  double alpha = 8.0;

  std::size_t rank() const { return a.cols(); }
  double scale() const { return alpha / static_cast<double>(rank()); }

  friend bool operator==(const LoraAdapter& x, const LoraAdapter& y) {
    return x.a == y.a && x.b == y.b &&
           std::bit_cast<std::uint64_t>(x.alpha) == std::bit_cast<std::uint64_t>(y.alpha);
  }
};

/// Linear softmax policy over one-hot state features. `weights` is the
/// trainable W in full mode and the frozen base in adapter mode.
struct PolicyParams {
  Matrix weights;
  std::optional<LoraAdapter> adapter;
  ParamVersion version;

  bool adapter_mode() const { return adapter.has_value(); }
  std::size_t action_count() const { return weights.rows(); }
  std::size_t feature_dim() const { return weights.cols(); }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// base_W + (alpha / rank) * A * B.
inline Matrix lora_merge(const PolicyParams& p) {
  if (!p.adapter) throw ContractViolation("lora_merge called without an adapter");
  const auto& ad = *p.adapter;
  if (ad.a.rows() != p.weights.rows() || ad.b.cols() != p.weights.cols() ||
      ad.a.cols() != ad.b.rows() || ad.rank() == 0) {
    throw ContractViolation("adapter shapes A " + ad.a.shape() + ", B " + ad.b.shape() +
                            " do not fit base " + p.weights.shape());
  }
  Matrix merged = p.weights;
  merged.add_scaled(matmul(ad.a, ad.b), ad.scale());
  return merged;
}

inline Matrix effective_weights(const PolicyParams& p) {
  return p.adapter ? lora_merge(p) : p.weights;
}

/// Version-0 policy: zero weights (uniform action distribution). In adapter
/// mode A = 0 and B is drawn from N(0, init_scale^2) so the adapter starts
/// as an exact no-op but still receives gradient through A.
inline PolicyParams initial_policy(std::size_t action_count, std::size_t feature_dim,
                                   const RunConfig& cfg) {
  PolicyParams p;
  p.weights = Matrix(action_count, feature_dim);
  if (cfg.lora) {
    LoraAdapter ad;
    ad.alpha = cfg.lora->alpha;
    ad.a = Matrix(action_count, cfg.lora->rank);
    ad.b = Matrix(cfg.lora->rank, feature_dim);
    auto rng = seeded_rng(cfg.seed, "policy/init/lora_b");
    for (double& v : ad.b.data()) v = cfg.lora->init_scale * rng.normal();
    p.adapter = std::move(ad);
  }
  return p;
}

inline std::vector<double> logits(const Matrix& w, std::span<const double> features) {
  if (features.size() != w.cols()) {
    throw ContractViolation("feature vector has length " + std::to_string(features.size()) +
                            ", policy expects " + std::to_string(w.cols()));
  }
  std::vector<double> z(w.rows(), 0.0);
  for (std::size_t a = 0; a < w.rows(); ++a) {
    const auto row = w.row(a);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * features[j];
    z[a] = acc;
  }
  return z;
}

/// log softmax(w * x). Throws DivergenceError on non-finite logits.
inline std::vector<double> action_logprobs(const Matrix& w, std::span<const double> features) {
  auto z = logits(w, features);
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) {
    if (!std::isfinite(v)) throw DivergenceError("non-finite logit; parameters have diverged");
    m = std::max(m, v);
  }
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double log_norm = m + std::log(sum);
  for (double& v : z) v -= log_norm;
  return z;
}

struct ActionSample {
  std::int32_t action = 0;
  double logprob = 0.0;
};

/// Samples from softmax(w * x) with one uniform draw from `rng`.
inline ActionSample act(const Matrix& effective, std::span<const double> features, RngStream& rng) {
  const auto lp = action_logprobs(effective, features);
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t chosen = lp.size() - 1;
  for (std::size_t a = 0; a < lp.size(); ++a) {
    cum += std::exp(lp[a]);
    if (u < cum) {
      chosen = a;
      break;
    }
  }
  return ActionSample{static_cast<std::int32_t>(chosen), lp[chosen]};
}

inline ActionSample act(const PolicyParams& p, std::span<const double> features, RngStream& rng) {
  return act(effective_weights(p), features, rng);
}

}  // namespace echo::policy
