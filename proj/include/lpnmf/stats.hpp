#pragma once

// Bootstrap inference over learners: percentile intervals for pattern
// coefficients, affinity summaries, and the group mean-difference test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpnmf/align.hpp"
#include "lpnmf/error.hpp"
#include "lpnmf/groups.hpp"
#include "lpnmf/matrix.hpp"
#include "lpnmf/nmf.hpp"
#include "lpnmf/nnls.hpp"
#include "lpnmf/rng.hpp"

namespace lpnmf {

// Type-7 quantile: linear interpolation between order statistics at
// rank h = (n - 1) p.
inline double empirical_quantile(std::span<const double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile level must lie in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// How replication fits are started in refit mode.
enum class BootstrapInit {
  warm,    // one run started from the reference patterns
  random,  // the full randomly initialised multi-restart fit
};

struct BootstrapConfig {
  std::size_t b = 10000;
  double level = 0.99;
  std::uint64_t seed = 1;
  // true: re-estimate P_b, A_b on every replication; false: keep the
  // reference affinities fixed.
  bool refit = true;
  BootstrapInit init = BootstrapInit::warm;
  std::size_t max_attempts = 5;
  // Called after every completed replication with (done, total).
  std::function<void(std::size_t, std::size_t)> progress;

  void validate() const {
    if (b < 1) throw ValidationError("bootstrap replications must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
    if (max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
  }
};

// Per (feature, pattern) bootstrap mean and percentile interval.
struct CoefficientCI {
  Matrix boot_mean;  // p x K
  Matrix lower;
  Matrix upper;
  std::size_t b = 0;
  double level = 0.0;
  std::size_t failed_attempts = 0;
  // Mean cosine similarity of each reference pattern to its matched
  // replication pattern (1 for every pattern in fast mode).
  Vector mean_similarity;
};

struct PatternSummary {
  std::string name;
  double q25 = 0.0;
  double mean = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
};

struct GroupStats {
  double mean_first = 0.0;
  double mean_second = 0.0;
  double pooled_sd = 0.0;
};

struct AffinitySummary {
  std::vector<PatternSummary> patterns;
  // Present when a grouping was supplied.
  std::vector<GroupStats> groups;
  std::string first_tag;
  std::string second_tag;
  std::size_t n_first = 0;
  std::size_t n_second = 0;
};

struct PatternTest {
  std::string name;
  double mean_first = 0.0;
  double mean_second = 0.0;
  double pooled_sd = 0.0;
  double observed_diff = 0.0;  // mean_first - mean_second
  double p_two_sided = 1.0;    // H_A: means differ
  double p_greater = 1.0;      // H_A: first > second
  double p_less = 1.0;         // H_A: first < second
};

struct TestReport {
  std::vector<PatternTest> patterns;
  std::size_t b = 0;
  bool refit = false;
  std::string first_tag;
  std::string second_tag;
  std::size_t failed_attempts = 0;
};

inline std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

inline std::vector<std::size_t> resample_indices(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

// Quartiles and mean of each affinity column.
inline AffinitySummary affinity_summary(const Matrix& a_mat) {
  if (a_mat.rows() == 0) throw ValidationError("no learners to summarise");
  AffinitySummary out;
  const Names names = a_mat.has_col_names() ? a_mat.col_names() : default_pattern_names(a_mat.cols());
  for (std::size_t c = 0; c < a_mat.cols(); ++c) {
    const Vector v = a_mat.col(c);
    out.patterns.push_back({names[c], empirical_quantile(v, 0.25), mean_of(v),
                            empirical_quantile(v, 0.5), empirical_quantile(v, 0.75)});
  }
  return out;
}

namespace detail {

// Group means are accumulated relative to a common shift so that a constant
// column yields bitwise-equal means and an exact zero difference.
inline GroupStats two_group_stats(std::span<const double> v, std::span<const char> first) {
  const double shift = v.empty() ? 0.0 : v[0];
  double s1 = 0, s0 = 0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (first[i]) {
      s1 += v[i] - shift;
      ++n1;
    } else {
      s0 += v[i] - shift;
      ++n0;
    }
  }
  GroupStats g;
  g.mean_first = shift + s1 / static_cast<double>(n1);
  g.mean_second = shift + s0 / static_cast<double>(n0);
  double ss1 = 0, ss0 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - (first[i] ? g.mean_first : g.mean_second);
    (first[i] ? ss1 : ss0) += d * d;
  }
  g.pooled_sd = std::sqrt((ss1 + ss0) / static_cast<double>(n1 + n0 - 2));
  return g;
}

// Mean of rows flagged 1 minus mean of rows flagged 0, per column. Row r of
// the data is rows[r] of `a`; sums are taken relative to row 0 of `a`.
inline void group_diffs(const Matrix& a, std::span<const std::size_t> rows,
                        std::span<const char> first, std::span<double> out) {
  const std::size_t k = a.cols();
  auto shift = a.row(0);
  std::vector<double> s1(k, 0.0), s0(k, 0.0);
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto row = a.row(rows[r]);
    auto& s = first[r] ? s1 : s0;
    (first[r] ? n1 : n0) += 1;
    for (std::size_t c = 0; c < k; ++c) s[c] += row[c] - shift[c];
  }
  for (std::size_t c = 0; c < k; ++c)
    out[c] = s1[c] / static_cast<double>(n1) - s0[c] / static_cast<double>(n0);
}

inline std::vector<char> checked_indicator(const Matrix& a_mat, const GroupLabeling& groups) {
  if (!a_mat.has_row_names())
    throw ValidationError("affinity matrix carries no learner ids to match against groups");
  auto ind = groups.indicator(a_mat.row_names());
  std::size_t n1 = 0;
  for (char c : ind) n1 += c;
  const std::size_t n0 = ind.size() - n1;
  if (n1 < 2 || n0 < 2) {
    throw ValidationError("each group needs at least two learners (got " + std::to_string(n1) +
                          " '" + groups.first_tag() + "' and " + std::to_string(n0) + " '" +
                          groups.second_tag() + "')");
  }
  return ind;
}

inline void check_reference(const Matrix& x, const FactorPair& reference) {
  if (reference.p_mat.rows() != x.rows() || reference.a_mat.rows() != x.cols()) {
    throw ValidationError("reference factors (" + reference.p_mat.shape() + ", " +
                          reference.a_mat.shape() + ") do not fit data " + x.shape());
  }
}

inline std::uint64_t attempt_seed(std::uint64_t master, std::size_t rep, std::size_t attempt) {
  const std::uint64_t s = derive_seed(master, rep);
  return attempt == 0 ? s : derive_seed(s, attempt);
}

// Refit on the resample and align to the reference.
inline FactorPair replicate_fit(const Matrix& xb, const FitConfig& cfg_fit,
                                const BootstrapConfig& cfg_boot, const FactorPair& reference,
                                Alignment* alignment) {
  FactorPair fp = cfg_boot.init == BootstrapInit::warm
                      ? fit_from(xb, cfg_fit, reference.p_mat)
                      : fit(xb, cfg_fit);
  Alignment al = align(reference, fp);
  fp = apply_alignment(std::move(fp), al);
  if (alignment) *alignment = std::move(al);
  return fp;
}

}  // namespace detail

// Adds per-group means and pooled standard deviations to the summary.
inline AffinitySummary group_summary(const Matrix& a_mat, const GroupLabeling& groups) {
  AffinitySummary out = affinity_summary(a_mat);
  const auto ind = detail::checked_indicator(a_mat, groups);
  out.first_tag = groups.first_tag();
  out.second_tag = groups.second_tag();
  for (char c : ind) (c ? out.n_first : out.n_second) += 1;
  for (std::size_t c = 0; c < a_mat.cols(); ++c) {
    const Vector v = a_mat.col(c);
    out.groups.push_back(detail::two_group_stats(v, ind));
  }
  return out;
}

// Resamples learners (columns of x) with replacement, refits (or, in fast
// mode, re-solves P against the fixed resampled affinities), aligns to the
// reference and collects rescaled pattern coefficients.
inline CoefficientCI bootstrap_ci(const Matrix& x, const FitConfig& cfg_fit,
                                  const BootstrapConfig& cfg_boot, const FactorPair& reference) {
  cfg_boot.validate();
  cfg_fit.validate();
  detail::check_reference(x, reference);
  const std::size_t p = x.rows(), n = x.cols(), k = reference.p_mat.cols();
  const std::size_t reps = cfg_boot.b;

  // samples[(i * k + c) * reps + b]
  std::vector<double> samples(p * k * reps);
  Vector sim_sum(k, 0.0);
  CoefficientCI out;

  for (std::size_t b = 0; b < reps; ++b) {
    std::optional<FactorPair> rep;
    Alignment al;
    for (std::size_t attempt = 0; attempt < cfg_boot.max_attempts && !rep; ++attempt) {
      Rng rng(detail::attempt_seed(cfg_boot.seed, b, attempt));
      const auto idx = resample_indices(rng, n);
      const Matrix xb = select_cols(x, idx);
      try {
        if (cfg_boot.refit) {
          rep = detail::replicate_fit(xb, cfg_fit, cfg_boot, reference, &al);
        } else {
          FactorPair fp;
          fp.k = k;
          fp.a_mat = select_rows(reference.a_mat, idx);
          fp.p_mat = transpose(nnls_multi(fp.a_mat, transpose(xb), cfg_fit.nnls));
          rep = rescale(std::move(fp), cfg_fit.rescale_mode);
          al.similarity.assign(k, 1.0);
        }
      } catch (const Error&) {
        ++out.failed_attempts;
      }
    }
    if (!rep) {
      throw NumericalError("bootstrap replication " + std::to_string(b + 1) + " failed " +
                           std::to_string(cfg_boot.max_attempts) + " times");
    }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t c = 0; c < k; ++c) samples[(i * k + c) * reps + b] = rep->p_mat(i, c);
    for (std::size_t c = 0; c < k; ++c) sim_sum[c] += al.similarity[c];
    if (cfg_boot.progress) cfg_boot.progress(b + 1, reps);
  }

  const double alpha = 1.0 - cfg_boot.level;
  out.boot_mean = Matrix(p, k);
  out.lower = Matrix(p, k);
  out.upper = Matrix(p, k);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      std::span<const double> s(samples.data() + (i * k + c) * reps, reps);
      out.boot_mean(i, c) = mean_of(s);
      out.lower(i, c) = empirical_quantile(s, alpha / 2.0);
      out.upper(i, c) = empirical_quantile(s, 1.0 - alpha / 2.0);
    }
  for (Matrix* m : {&out.boot_mean, &out.lower, &out.upper}) {
    m->set_row_names(reference.p_mat.row_names());
    m->set_col_names(reference.p_mat.has_col_names() ? reference.p_mat.col_names()
                                                     : default_pattern_names(k));
  }
  out.b = reps;
  out.level = cfg_boot.level;
  out.mean_similarity.resize(k);
  for (std::size_t c = 0; c < k; ++c) out.mean_similarity[c] = sim_sum[c] / static_cast<double>(reps);
  return out;
}

// Observed statistic: first-group minus second-group mean affinity of the
// reference fit. Null distribution: per replication, resample learners with
// replacement, take their affinities (refit + align, or the fixed reference
// rows in fast mode) and shuffle the group labels over the resampled
// learners. p-values use the (1 + count) / (B + 1) convention.
inline TestReport group_test(const Matrix& x, const GroupLabeling& groups, const FitConfig& cfg_fit,
                             const BootstrapConfig& cfg_boot, const FactorPair& reference) {
  cfg_boot.validate();
  const Matrix& a_ref = reference.a_mat;
  const std::size_t n = a_ref.rows(), k = a_ref.cols();
  if (cfg_boot.refit) {
    cfg_fit.validate();
    detail::check_reference(x, reference);
  }
  const auto labels = detail::checked_indicator(a_ref, groups);
  const auto summary = group_summary(a_ref, groups);

  std::vector<std::size_t> all(n);
  for (std::size_t j = 0; j < n; ++j) all[j] = j;
  Vector observed(k);
  detail::group_diffs(a_ref, all, labels, observed);

  std::vector<std::size_t> ge_abs(k, 0), ge(k, 0), le(k, 0);
  Vector diffs(k);
  TestReport report;
  for (std::size_t b = 0; b < cfg_boot.b; ++b) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < cfg_boot.max_attempts && !done; ++attempt) {
      Rng rng(detail::attempt_seed(cfg_boot.seed, b, attempt));
      const auto idx = resample_indices(rng, n);
      std::vector<char> shuffled = labels;
      rng.shuffle(std::span(shuffled));
      try {
        if (cfg_boot.refit) {
          const auto rep = detail::replicate_fit(select_cols(x, idx), cfg_fit, cfg_boot, reference,
                                                 nullptr);
          detail::group_diffs(rep.a_mat, all, shuffled, diffs);
        } else {
          detail::group_diffs(a_ref, idx, shuffled, diffs);
        }
        done = true;
      } catch (const Error&) {
        ++report.failed_attempts;
      }
    }
    if (!done) {
      throw NumericalError("bootstrap replication " + std::to_string(b + 1) + " failed " +
                           std::to_string(cfg_boot.max_attempts) + " times");
    }
    for (std::size_t c = 0; c < k; ++c) {
      ge_abs[c] += std::abs(diffs[c]) >= std::abs(observed[c]);
      ge[c] += diffs[c] >= observed[c];
      le[c] += diffs[c] <= observed[c];
    }
    if (cfg_boot.progress) cfg_boot.progress(b + 1, cfg_boot.b);
  }

  const double denom = static_cast<double>(cfg_boot.b + 1);
  report.b = cfg_boot.b;
  report.refit = cfg_boot.refit;
  report.first_tag = groups.first_tag();
  report.second_tag = groups.second_tag();
  for (std::size_t c = 0; c < k; ++c) {
    PatternTest t;
    t.name = summary.patterns[c].name;
    t.mean_first = summary.groups[c].mean_first;
    t.mean_second = summary.groups[c].mean_second;
    t.pooled_sd = summary.groups[c].pooled_sd;
    t.observed_diff = observed[c];
    t.p_two_sided = static_cast<double>(1 + ge_abs[c]) / denom;
    t.p_greater = static_cast<double>(1 + ge[c]) / denom;
    t.p_less = static_cast<double>(1 + le[c]) / denom;
    report.patterns.push_back(std::move(t));
  }
  return report;
}

// Fast-mode test needing only the reference affinities.
inline TestReport group_test(const GroupLabeling& groups, BootstrapConfig cfg_boot,
                             const FactorPair& reference) {
  cfg_boot.refit = false;
  return group_test(Matrix{}, groups, FitConfig{}, cfg_boot, reference);
}

}  // namespace lpnmf
