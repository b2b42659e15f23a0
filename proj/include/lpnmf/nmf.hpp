#pragma once

// Non-negative matrix factorization X ~ P A^T by alternating NNLS.
//
// X is p x n (features x learners), P is p x K (patterns), A is n x K
// (affinities). Each sweep solves A^T <- NNLS(P, X) and then
// P^T <- NNLS(A, X^T) exactly, so the objective ||X - P A^T||_F^2 never
// increases.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lpnmf/error.hpp"
#include "lpnmf/matrix.hpp"
#include "lpnmf/nnls.hpp"
#include "lpnmf/rng.hpp"

namespace lpnmf {

enum class RescaleMode { max, mean, none };

inline std::string_view to_string(RescaleMode m) {
  switch (m) {
    case RescaleMode::max: return "max";
    case RescaleMode::mean: return "mean";
    case RescaleMode::none: return "none";
  }
  return "?";
}

inline RescaleMode parse_rescale_mode(std::string_view s) {
  if (s == "max") return RescaleMode::max;
  if (s == "mean") return RescaleMode::mean;
  if (s == "none") return RescaleMode::none;
  throw ValidationError("unknown rescale mode '" + std::string(s) +
                        "' (expected max, mean or none)");
}

struct FitConfig {
  std::size_t k = 8;
  std::uint64_t seed = 1;
  // Stop when (obj_prev - obj) / max(obj_prev, 1e-30) < tol.
  double tol = 1e-6;
  std::size_t max_iter = 500;
  std::size_t restarts = 10;
  RescaleMode rescale_mode = RescaleMode::max;
  NnlsOptions nnls{};

  void validate() const {
    if (k < 1) throw ValidationError("k must be at least 1");
    if (!(tol > 0.0)) throw ValidationError("tol must be positive");
    if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
    if (restarts < 1) throw ValidationError("restarts must be at least 1");
  }
};

struct FactorPair {
  Matrix p_mat;  // p x K
  Matrix a_mat;  // n x K
  std::size_t k = 0;
  double objective = 0.0;
  std::vector<double> objective_trace;  // best run, one entry per sweep
  std::uint64_t seed = 0;
  std::size_t restarts_used = 0;
  std::size_t best_restart = 0;
  std::size_t iterations = 0;
  bool converged = false;
  FitConfig config{};
  // Patterns whose affinity column is identically zero.
  std::vector<std::size_t> dead_patterns;

  std::size_t features() const { return p_mat.rows(); }
  std::size_t learners() const { return a_mat.rows(); }
};

inline Names default_pattern_names(std::size_t k) {
  Names names;
  names.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) names.push_back("pattern_" + std::to_string(i));
  return names;
}

inline std::vector<std::size_t> zero_columns(const Matrix& m) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    bool zero = true;
    for (std::size_t i = 0; i < m.rows() && zero; ++i) zero = m(i, j) == 0.0;
    if (zero) out.push_back(j);
  }
  return out;
}

// Diagonal rescaling P S, A S^{-1}; the product P A^T is unchanged.
// max: each affinity column peaks at 1. mean: each affinity column averages 1.
// All-zero affinity columns keep s_k = 1.
inline FactorPair rescale(FactorPair fp, RescaleMode mode) {
  if (mode == RescaleMode::none) return fp;
  const std::size_t k = fp.a_mat.cols(), n = fp.a_mat.rows();
  if (fp.p_mat.cols() != k) {
    throw ValidationError("pattern matrix " + fp.p_mat.shape() +
                          " and affinity matrix " + fp.a_mat.shape() +
                          " disagree on K");
  }
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    if (mode == RescaleMode::max) {
      for (std::size_t j = 0; j < n; ++j) s = std::max(s, fp.a_mat(j, c));
    } else {
      for (std::size_t j = 0; j < n; ++j) s += fp.a_mat(j, c);
      s /= static_cast<double>(n);
    }
    if (!(s > 0.0)) continue;
    for (std::size_t j = 0; j < n; ++j) fp.a_mat(j, c) /= s;
    for (std::size_t i = 0; i < fp.p_mat.rows(); ++i) fp.p_mat(i, c) *= s;
  }
  fp.dead_patterns = zero_columns(fp.a_mat);
  return fp;
}

// Model approximation of learner j's feature column: sum_k A(j,k) P(:,k).
inline Vector reconstruct(const FactorPair& fp, std::size_t learner) {
  if (learner >= fp.a_mat.rows()) {
    throw ValidationError("learner index " + std::to_string(learner) +
                          " out of range for " +
                          std::to_string(fp.a_mat.rows()) + " learners");
  }
  Vector out(fp.p_mat.rows(), 0.0);
  for (std::size_t c = 0; c < fp.p_mat.cols(); ++c) {
    const double a = fp.a_mat(learner, c);
    if (a == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * fp.p_mat(i, c);
  }
  return out;
}

namespace detail {

inline void validate_data(const Matrix& x) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      if (!std::isfinite(v)) {
        throw ValidationError("data entry (" + std::to_string(i) + ", " +
                              std::to_string(j) + ") is not finite");
      }
      if (v < 0.0) {
        throw ValidationError("data entry (" + std::to_string(i) + ", " +
                              std::to_string(j) + ") is negative");
      }
    }
}

inline void validate_k(const Matrix& x, std::size_t k) {
  const std::size_t bound = std::min(x.rows(), x.cols());
  if (k < 1 || k > bound) {
    throw ValidationError("k = " + std::to_string(k) +
                          " must lie in [1, min(p, n)] = [1, " +
                          std::to_string(bound) + "]");
  }
}

struct RunResult {
  Matrix p;
  Matrix a;
  std::vector<double> trace;
  bool converged = false;
};

inline RunResult alternate(const Matrix& x, const Matrix& xt, Matrix p,
                           const FitConfig& cfg) {
  RunResult run;
  double prev = 0.0;
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    run.a = transpose(nnls_multi(p, x, cfg.nnls));
    p = transpose(nnls_multi(run.a, xt, cfg.nnls));
    const double obj = residual_sq(x, p, run.a);
    run.trace.push_back(obj);
    if (it > 0 && (prev - obj) / std::max(prev, 1e-30) < cfg.tol) {
      run.converged = true;
      break;
    }
    prev = obj;
  }
  run.p = std::move(p);
  return run;
}

inline FactorPair finish(const Matrix& x, RunResult run, const FitConfig& cfg) {
  FactorPair fp;
  fp.k = cfg.k;
  fp.p_mat = std::move(run.p);
  fp.a_mat = std::move(run.a);
  fp.objective_trace = std::move(run.trace);
  fp.iterations = fp.objective_trace.size();
  fp.converged = run.converged;
  fp.seed = cfg.seed;
  fp.config = cfg;
  fp.p_mat.set_row_names(x.row_names());
  fp.p_mat.set_col_names(default_pattern_names(cfg.k));
  fp.a_mat.set_row_names(x.col_names());
  fp.a_mat.set_col_names(default_pattern_names(cfg.k));
  fp = rescale(std::move(fp), cfg.rescale_mode);
  fp.objective = residual_sq(x, fp.p_mat, fp.a_mat);
  return fp;
}

}  // namespace detail

// Uniform (0, 1] pattern initialisation for restart `index`.
inline Matrix initial_patterns(std::size_t p, std::size_t k,
                               std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  Matrix m(p, k);
  for (auto& v : m.data()) v = rng.uniform_open_closed();
  return m;
}

// Best of cfg.restarts independent runs; ties go to the lowest restart.
inline FactorPair fit(const Matrix& x, const FitConfig& cfg) {
  cfg.validate();
  detail::validate_data(x);
  detail::validate_k(x, cfg.k);

  const Matrix xt = transpose(x);
  std::optional<detail::RunResult> best;
  std::size_t best_index = 0;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    auto run = detail::alternate(
        x, xt, initial_patterns(x.rows(), cfg.k, cfg.seed, r), cfg);
    if (!best || run.trace.back() < best->trace.back()) {
      best = std::move(run);
      best_index = r;
    }
  }
  FactorPair fp = detail::finish(x, std::move(*best), cfg);
  fp.restarts_used = cfg.restarts;
  fp.best_restart = best_index;
  return fp;
}

// Single run started from the given patterns instead of random ones.
inline FactorPair fit_from(const Matrix& x, const FitConfig& cfg,
                           const Matrix& start) {
  cfg.validate();
  detail::validate_data(x);
  detail::validate_k(x, cfg.k);
  if (start.rows() != x.rows() || start.cols() != cfg.k) {
    throw ValidationError("starting patterns " + start.shape() +
                          " do not match " +
                          Matrix::shape_string(x.rows(), cfg.k));
  }
  detail::validate_data(start);
  Matrix init = start;
  // NNLS from an all-zero pattern would stall; nudge zero columns.
  for (auto c : zero_columns(init))
    for (std::size_t i = 0; i < init.rows(); ++i) init(i, c) = 1.0;
  FactorPair fp = detail::finish(
      x, detail::alternate(x, transpose(x), std::move(init), cfg), cfg);
  fp.restarts_used = 1;
  return fp;
}

}  // namespace lpnmf
