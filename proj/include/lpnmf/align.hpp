#pragma once

// Matching factor columns across refits. NMF is only identified up to a
// column permutation and scale, so patterns from two fits are paired by the
// assignment maximising total cosine similarity of the P columns.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lpnmf/error.hpp"
#include "lpnmf/matrix.hpp"
#include "lpnmf/nmf.hpp"

namespace lpnmf {

struct Alignment {
  // perm[k] = column of `other` matched to reference column k.
  std::vector<std::size_t> perm;
  // similarity[k] = cosine between reference column k and other column perm[k].
  std::vector<double> similarity;
};

inline double cosine_similarity(std::span<const double> a,
                                std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), 0.0, 1.0);
}

// Minimum-cost assignment for a square cost matrix (row-major, n x n),
// Kuhn-Munkres with potentials. Returns row -> column.
inline std::vector<std::size_t> hungarian(const std::vector<double>& cost,
                                          std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Aligns the P columns of `other` to those of `reference`. Zero columns on
// either side take no part in the optimisation and are paired afterwards in
// ascending index order.
inline Alignment align_patterns(const Matrix& reference, const Matrix& other) {
  if (reference.cols() != other.cols()) {
    throw ValidationError("cannot align K = " + std::to_string(other.cols()) +
                          " patterns to K = " +
                          std::to_string(reference.cols()));
  }
  if (reference.rows() != other.rows()) {
    throw ValidationError("cannot align patterns over " +
                          std::to_string(other.rows()) + " features to " +
                          std::to_string(reference.rows()));
  }
  const std::size_t k = reference.cols();
  std::vector<Vector> ref_cols(k), other_cols(k);
  for (std::size_t c = 0; c < k; ++c) {
    ref_cols[c] = reference.col(c);
    other_cols[c] = other.col(c);
  }
  auto nonzero = [](const Vector& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
  };
  std::vector<std::size_t> live_ref, live_other;
  for (std::size_t c = 0; c < k; ++c) {
    if (nonzero(ref_cols[c])) live_ref.push_back(c);
    if (nonzero(other_cols[c])) live_other.push_back(c);
  }

  constexpr std::size_t unmatched = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> perm(k, unmatched);
  std::vector<char> taken(k, 0);
  const std::size_t s = std::max(live_ref.size(), live_other.size());
  if (!live_ref.empty() && !live_other.empty()) {
    std::vector<double> cost(s * s, 0.0);
    for (std::size_t i = 0; i < live_ref.size(); ++i)
      for (std::size_t j = 0; j < live_other.size(); ++j)
        cost[i * s + j] =
            -cosine_similarity(ref_cols[live_ref[i]], other_cols[live_other[j]]);
    const auto assignment = hungarian(cost, s);
    for (std::size_t i = 0; i < live_ref.size(); ++i) {
      const std::size_t j = assignment[i];
      if (j < live_other.size()) {
        perm[live_ref[i]] = live_other[j];
        taken[live_other[j]] = 1;
      }
    }
  }
  std::size_t next = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (perm[c] != unmatched) continue;
    while (taken[next]) ++next;
    perm[c] = next;
    taken[next] = 1;
  }

  Alignment out;
  out.perm = perm;
  out.similarity.resize(k);
  for (std::size_t c = 0; c < k; ++c)
    out.similarity[c] = cosine_similarity(ref_cols[c], other_cols[perm[c]]);
  return out;
}

inline Alignment align(const FactorPair& reference, const FactorPair& other) {
  if (reference.p_mat.cols() != other.p_mat.cols()) {
    throw ValidationError("cannot align a K = " +
                          std::to_string(other.p_mat.cols()) +
                          " fit to a K = " +
                          std::to_string(reference.p_mat.cols()) + " reference");
  }
  return align_patterns(reference.p_mat, other.p_mat);
}

// Reorders the columns of both factors so that column k is other's perm[k].
inline FactorPair apply_alignment(FactorPair fp, const Alignment& al) {
  Names pn = fp.p_mat.col_names(), an = fp.a_mat.col_names();
  fp.p_mat = select_cols(fp.p_mat, al.perm);
  fp.a_mat = select_cols(fp.a_mat, al.perm);
  // Column labels stay positional.
  fp.p_mat.set_col_names(pn);
  fp.a_mat.set_col_names(an);
  fp.dead_patterns = zero_columns(fp.a_mat);
  return fp;
}

}  // namespace lpnmf
