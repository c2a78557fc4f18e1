// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "echo/core/error.hpp"
#include "echo/trainer/training_log.hpp"

namespace echo::harness {

// ---- equivalence -------------------------------------------------------------

// Bit equality is the target; this slack only covers builds that differ in
// floating-point contraction.
inline constexpr double kMaxEquivalenceTolerance = 1e-12;

struct EquivalenceReport {
  bool pass = false;
  bool exact = false;
  double tolerance = 0.0;
  std::size_t versions_compared = 0;
  std::vector<double> max_abs_diff;  // per version, v0 first
  std::optional<std::size_t> first_divergent_version;
  std::string structural_error;
};

/// Compares two parameter trails version by version. Only runs made with
/// version_gap_threshold 0 are comparable; anything else is refused.
inline EquivalenceReport verify_equivalence(const std::vector<policy::PolicyParams>& oracle,
                                            const std::vector<policy::PolicyParams>& candidate,
                                            std::uint64_t version_gap_threshold, double tolerance = 0.0) {
  if (version_gap_threshold != 0) {
    throw ContractViolation("equivalence needs version_gap_threshold 0; this run used " +
                            std::to_string(version_gap_threshold));
  }
  if (!(tolerance >= 0.0 && tolerance <= kMaxEquivalenceTolerance)) {
    throw ContractViolation("equivalence tolerance must lie in [0, 1e-12]");
  }
  EquivalenceReport r;
  r.tolerance = tolerance;
  if (oracle.size() != candidate.size()) {
    r.structural_error = "trail lengths differ: " + std::to_string(oracle.size()) + " vs " +
                         std::to_string(candidate.size());
    return r;
  }
  double worst = 0.0;
  for (std::size_t v = 0; v < oracle.size(); ++v) {
    const auto a = trainer::flatten(oracle[v]);
    const auto b = trainer::flatten(candidate[v]);
    if (a.size() != b.size() || oracle[v].version != candidate[v].version) {
      r.structural_error = "version " + std::to_string(v) + " differs in shape or label";
      return r;
    }
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = std::abs(a[i] - b[i]);
      d = std::isnan(diff) ? INFINITY : std::max(d, diff);
    }
    r.max_abs_diff.push_back(d);
    if (d != 0.0 && !r.first_divergent_version) r.first_divergent_version = v;
    worst = std::max(worst, d);
  }
  r.versions_compared = oracle.size();
  r.exact = !r.first_divergent_version;
  r.pass = worst <= tolerance;
  return r;
}

inline nlohmann::json to_json(const EquivalenceReport& r) {
  nlohmann::json j{{"pass", r.pass},
                   {"exact", r.exact},
                   {"tolerance", r.tolerance},
                   {"versions_compared", r.versions_compared},
                   {"max_abs_diff", r.max_abs_diff},
                   {"structural_error", r.structural_error}};
  j["first_divergent_version"] =
      r.first_divergent_version ? nlohmann::json(*r.first_divergent_version) : nlohmann::json(nullptr);
  return j;
}

// ---- staleness ---------------------------------------------------------------

struct StalenessReport {
  bool pass = false;
  std::uint64_t delta_max = 0;
  std::uint64_t bound = 0;
  std::uint64_t samples = 0;
  std::uint64_t max_observed = 0;
  std::uint64_t violations = 0;
  std::map<std::uint64_t, std::uint64_t> histogram;
};

/// Histogram of consumption staleness; passes iff nothing exceeds
/// delta_max + 1.
inline StalenessReport audit_staleness(const std::vector<trainer::StepRecord>& log, std::uint64_t delta_max) {
  StalenessReport r;
  r.delta_max = delta_max;
  r.bound = delta_max + 1;
  for (const auto& step : log) {
    for (const auto& [k, n] : step.staleness_histogram) {
      r.histogram[k] += n;
      r.samples += n;
      r.max_observed = std::max(r.max_observed, k);
      if (k > r.bound) r.violations += n;
    }
  }
  r.pass = r.violations == 0;
  return r;
}

inline nlohmann::json to_json(const StalenessReport& r) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [k, n] : r.histogram) hist[std::to_string(k)] = n;
  return {{"pass", r.pass},       {"delta_max", r.delta_max},   {"bound", r.bound},          {"samples", r.samples},
          {"max_observed", r.max_observed}, {"violations", r.violations}, {"histogram", hist}};
}

// ---- convergence -------------------------------------------------------------

struct ConvergenceReport {
  bool pass = false;
  std::size_t window = 0;
  double tolerance = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double abs_diff = 0.0;
  double allowed = 0.0;
  std::vector<double> per_seed_a;
  std::vector<double> per_seed_b;
};

inline double final_window_mean(const std::vector<trainer::StepRecord>& log, std::size_t window) {
  if (window == 0 || window > log.size()) {
    throw ContractViolation("window " + std::to_string(window) + " does not fit a log of " +
                            std::to_string(log.size()) + " steps");
  }
  double sum = 0.0;
  for (std::size_t i = log.size() - window; i < log.size(); ++i) sum += log[i].mean_return;
  return sum / static_cast<double>(window);
}

/// Compares the seed-averaged final-window mean return of two groups of runs.
/// The report is produced whether or not the comparison passes.
inline ConvergenceReport compare_convergence(const std::vector<std::vector<trainer::StepRecord>>& runs_a,
                                             const std::vector<std::vector<trainer::StepRecord>>& runs_b,
                                             std::size_t window, double tolerance) {
  if (runs_a.size() < 3 || runs_b.size() < 3) {
    throw ContractViolation("convergence comparison needs at least 3 seeds per side");
  }
  const auto steps = runs_a.front().size();
  for (const auto* group : {&runs_a, &runs_b}) {
    for (const auto& run : *group) {
      if (run.size() != steps) throw ContractViolation("runs differ in step count");
    }
  }
  ConvergenceReport r;
  r.window = window;
  r.tolerance = tolerance;
  for (const auto& run : runs_a) r.per_seed_a.push_back(final_window_mean(run, window));
  for (const auto& run : runs_b) r.per_seed_b.push_back(final_window_mean(run, window));
  auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  r.mean_a = mean(r.per_seed_a);
  r.mean_b = mean(r.per_seed_b);
  r.abs_diff = std::abs(r.mean_a - r.mean_b);
  r.allowed = tolerance * std::max(std::abs(r.mean_a), std::abs(r.mean_b));
  r.pass = r.abs_diff <= r.allowed;
  return r;
}

inline nlohmann::json to_json(const ConvergenceReport& r) {
  return {{"pass", r.pass},         {"window", r.window},         {"tolerance", r.tolerance},
          {"mean_a", r.mean_a},     {"mean_b", r.mean_b},         {"abs_diff", r.abs_diff},
          {"allowed", r.allowed},   {"per_seed_a", r.per_seed_a}, {"per_seed_b", r.per_seed_b}};
}

// ---- JUnit -------------------------------------------------------------------

struct CaseResult {
  std::string name;
  bool pass = false;
  std::string message;
  double seconds = 0.0;
};

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline void write_junit(const std::string& path, const std::string& suite, const std::vector<CaseResult>& cases) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  std::size_t failures = 0;
  for (const auto& c : cases) failures += c.pass ? 0 : 1;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<testsuite name=\"" << xml_escape(suite) << "\" tests=\"" << cases.size() << "\" failures=\"" << failures
      << "\">\n";
  for (const auto& c : cases) {
    out << "  <testcase name=\"" << xml_escape(c.name) << "\" time=\"" << c.seconds << "\"";
    if (c.pass) {
      out << "/>\n";
    } else {
      out << ">\n    <failure message=\"" << xml_escape(c.message) << "\"/>\n  </testcase>\n";
    }
  }
  out << "</testsuite>\n";
}

}  // namespace echo::harness
