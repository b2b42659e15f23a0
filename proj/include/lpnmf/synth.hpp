#pragma once

// Synthetic learner data with known sparse non-negative factors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include "lpnmf/error.hpp"
#include "lpnmf/groups.hpp"
#include "lpnmf/matrix.hpp"
#include "lpnmf/nmf.hpp"
#include "lpnmf/rng.hpp"
#include "lpnmf/schema.hpp"

namespace lpnmf {

struct GroupShift {
  std::size_t pattern = 0;  // 0-based
  double delta = 0.0;
  double fraction = 0.5;    // share of learners in the first ("f") group
};

struct SynthConfig {
  std::size_t p = 21;
  std::size_t n = 111;
  std::size_t k = 8;
  std::size_t defining_per_pattern = 3;
  double zero_affinity_prob = 0.2;
  double noise_sd = 0.0;
  std::uint64_t seed = 1;
  std::optional<GroupShift> group_shift;
};

struct SynthData {
  Matrix x;       // p x n
  Matrix p_true;  // p x k
  Matrix a_true;  // n x k
  std::optional<GroupLabeling> groups;
};

inline std::string learner_id(std::size_t j, std::size_t n) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(n).size());
  std::string digits = std::to_string(j + 1);
  return "L" + std::string(width - digits.size(), '0') + digits;
}

inline void validate(const SynthConfig& cfg) {
  if (cfg.p < 1 || cfg.n < 1 || cfg.k < 1)
    throw ValidationError("p, n and k must all be at least 1");
  if (cfg.defining_per_pattern < 1 || cfg.defining_per_pattern > cfg.p)
    throw ValidationError("defining features per pattern must lie in [1, p] = [1, " +
                          std::to_string(cfg.p) + "]");
  if (!(cfg.zero_affinity_prob >= 0.0 && cfg.zero_affinity_prob <= 1.0))
    throw ValidationError("zero-affinity probability must lie in [0, 1]");
  if (!(cfg.noise_sd >= 0.0) || !std::isfinite(cfg.noise_sd))
    throw ValidationError("noise sd must be finite and non-negative");
  if (cfg.group_shift) {
    const auto& g = *cfg.group_shift;
    if (g.pattern >= cfg.k)
      throw ValidationError("group shift pattern " + std::to_string(g.pattern + 1) +
                            " exceeds k = " + std::to_string(cfg.k));
    if (!(g.delta >= 0.0) || !std::isfinite(g.delta))
      throw ValidationError("group shift delta must be finite and non-negative");
    const auto nf = static_cast<std::size_t>(std::llround(g.fraction * static_cast<double>(cfg.n)));
    if (!(g.fraction > 0.0 && g.fraction < 1.0) || nf < 1 || nf >= cfg.n)
      throw ValidationError("group fraction must leave both groups non-empty");
  }
}

inline SynthData generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t p = cfg.p, n = cfg.n, k = cfg.k, d = cfg.defining_per_pattern;

  // Defining features: disjoint blocks of a shuffled feature order when they
  // fit, otherwise an independent draw per pattern.
  std::vector<std::vector<std::size_t>> defining(k);
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  if (d * k <= p) {
    rng.shuffle(std::span(order));
    for (std::size_t c = 0; c < k; ++c)
      defining[c].assign(order.begin() + static_cast<std::ptrdiff_t>(c * d),
                         order.begin() + static_cast<std::ptrdiff_t>((c + 1) * d));
  } else {
    for (std::size_t c = 0; c < k; ++c) {
      rng.shuffle(std::span(order));
      defining[c].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(d));
    }
  }

  SynthData out;
  out.p_true = Matrix(p, k);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<char> high(p, 0);
    for (auto i : defining[c]) high[i] = 1;
    for (std::size_t i = 0; i < p; ++i)
      out.p_true(i, c) = high[i] ? rng.uniform_open_closed(0.5, 1.0) : rng.uniform(0.0, 0.1);
  }

  out.a_true = Matrix(n, k);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < k; ++c)
      out.a_true(j, c) = rng.bernoulli(cfg.zero_affinity_prob) ? 0.0 : rng.uniform_open_closed();

  Names ids(n);
  for (std::size_t j = 0; j < n; ++j) ids[j] = learner_id(j, n);

  if (cfg.group_shift) {
    const auto& g = *cfg.group_shift;
    const auto nf = static_cast<std::size_t>(std::llround(g.fraction * static_cast<double>(n)));
    std::vector<std::size_t> learners(n);
    std::iota(learners.begin(), learners.end(), 0);
    rng.shuffle(std::span(learners));
    std::vector<char> first(n, 0);
    for (std::size_t i = 0; i < nf; ++i) first[learners[i]] = 1;
    std::map<std::string, std::string> labels;
    for (std::size_t j = 0; j < n; ++j) {
      if (first[j]) out.a_true(j, g.pattern) += g.delta;
      labels[ids[j]] = first[j] ? "f" : "p";
    }
    out.groups = GroupLabeling(std::move(labels));
  }

  out.x = multiply(out.p_true, transpose(out.a_true));
  if (cfg.noise_sd > 0.0)
    for (auto& v : out.x.data()) v = std::max(0.0, v + cfg.noise_sd * rng.normal());

  Names features;
  if (p == builtin_schema().size()) {
    features = builtin_schema().names();
  } else {
    for (std::size_t i = 0; i < p; ++i) features.push_back("f" + std::to_string(i + 1));
  }
  out.x.set_row_names(features);
  out.x.set_col_names(ids);
  out.p_true.set_row_names(features);
  out.p_true.set_col_names(default_pattern_names(k));
  out.a_true.set_row_names(ids);
  out.a_true.set_col_names(default_pattern_names(k));
  return out;
}

}  // namespace lpnmf
