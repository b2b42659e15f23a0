#pragma once

// Lawson-Hanson active-set solver for  min ||C x - d||^2  s.t.  x >= 0.
//
// The outer loop moves the coordinate with the largest positive negative
// gradient w = C^T (d - C x) into the passive set; the inner loop solves the
// unconstrained problem on the passive columns and, while that solution has
// non-positive entries, interpolates back toward feasibility and drops the
// coordinates that hit zero. Termination is certified by the KKT conditions.
//
// Two interchangeable subproblem backends share the loop:
//  * QrSubproblem factorises the passive columns of C with Householder QR.
//  * GramSubproblem works on G = C^T C and b = C^T d with a Cholesky factor
//    of G restricted to the passive set. nnls_multi uses it because G is
//    formed once and reused across every right-hand side.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpnmf/error.hpp"
#include "lpnmf/matrix.hpp"

namespace lpnmf {

struct NnlsOptions {
  // KKT tolerance, scaled by (1 + ||C^T d||_inf).
  double kkt_tol = 1e-10;
  // A passive column whose QR pivot falls below pivot_tol * (largest pivot)
  // is treated as linearly dependent.
  double pivot_tol = 1e-12;
  // 0 selects the default cap of 3 * cols.
  std::size_t max_iter = 0;
};

struct NnlsSolution {
  Vector x;
  double residual_sq = 0.0;
  std::size_t iterations = 0;
  // Coordinates held at zero, ascending.
  std::vector<std::size_t> active_set;
};

// Raised when the iteration cap is exceeded; carries the last feasible iterate.
class NnlsError : public NumericalError {
 public:
  NnlsError(const std::string& what, NnlsSolution best)
      : NumericalError(what), best_(std::move(best)) {}
  const NnlsSolution& best() const noexcept { return best_; }

 private:
  NnlsSolution best_;
};

enum class NnlsMethod { qr, gram };

namespace detail {

struct LsResult {
  // Solution on the passive columns, in the order they were passed.
  Vector z;
  // Position (into the passive list) of the first dependent column, if any.
  std::optional<std::size_t> deficient;
};

class QrSubproblem {
 public:
  QrSubproblem(const Matrix& c, std::span<const double> d, double pivot_tol)
      : c_(c), d_(d), pivot_tol_(pivot_tol) {}

  std::size_t cols() const { return c_.cols(); }

  // w = C^T (d - C x)
  void negative_gradient(std::span<const double> x, Vector& w) const {
    const std::size_t m = c_.rows(), n = c_.cols();
    Vector r(d_.begin(), d_.end());
    for (std::size_t i = 0; i < m; ++i) {
      auto ci = c_.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ci[j] * x[j];
      r[i] -= s;
    }
    w.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      auto ci = c_.row(i);
      for (std::size_t j = 0; j < n; ++j) w[j] += ci[j] * r[i];
    }
  }

  double ctd_inf() const {
    Vector zero(c_.cols(), 0.0), w;
    negative_gradient(zero, w);
    double mx = 0.0;
    for (double v : w) mx = std::max(mx, std::abs(v));
    return mx;
  }

  LsResult solve(std::span<const std::size_t> passive) const {
    const std::size_t m = c_.rows(), q = passive.size();
    // Column-major working copy of the passive columns.
    std::vector<double> a(m * q);
    for (std::size_t j = 0; j < q; ++j)
      for (std::size_t i = 0; i < m; ++i) a[j * m + i] = c_(i, passive[j]);
    Vector rhs(d_.begin(), d_.end());
    Vector diag(q, 0.0);

    auto col = [&](std::size_t j) { return a.data() + j * m; };
    double max_pivot = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      if (j >= m) break;  // more columns than rows: the rest are dependent
      double* cj = col(j);
      double norm = 0.0;
      for (std::size_t i = j; i < m; ++i) norm += cj[i] * cj[i];
      norm = std::sqrt(norm);
      diag[j] = norm;
      if (norm == 0.0) continue;
      const double alpha = cj[j] > 0 ? -norm : norm;
      // Householder vector v = x - alpha e_j stored in place;
      // v^T v = 2 ||x||^2 - 2 alpha x_j.
      const double vnorm_sq = 2.0 * norm * norm - 2.0 * alpha * cj[j];
      cj[j] -= alpha;
      for (std::size_t k = j + 1; k < q; ++k) {
        double* ck = col(k);
        double dot = 0.0;
        for (std::size_t i = j; i < m; ++i) dot += cj[i] * ck[i];
        const double f = 2.0 * dot / vnorm_sq;
        for (std::size_t i = j; i < m; ++i) ck[i] -= f * cj[i];
      }
      double dot = 0.0;
      for (std::size_t i = j; i < m; ++i) dot += cj[i] * rhs[i];
      const double f = 2.0 * dot / vnorm_sq;
      for (std::size_t i = j; i < m; ++i) rhs[i] -= f * cj[i];
      // R_jj = alpha
      cj[j] = alpha;
      max_pivot = std::max(max_pivot, norm);
    }

    LsResult out;
    for (std::size_t j = 0; j < q; ++j) {
      if (j >= m || diag[j] <= pivot_tol_ * max_pivot || diag[j] == 0.0) {
        out.deficient = j;
        return out;
      }
    }
    out.z.assign(q, 0.0);
    for (std::size_t jj = q; jj-- > 0;) {
      double s = rhs[jj];
      for (std::size_t k = jj + 1; k < q; ++k) s -= col(k)[jj] * out.z[k];
      out.z[jj] = s / col(jj)[jj];
    }
    return out;
  }

 private:
  const Matrix& c_;
  std::span<const double> d_;
  double pivot_tol_;
};

// Works from G = C^T C (n x n, row-major) and b = C^T d. The Cholesky factor
// of G_PP equals R of the QR of C_P up to row signs, so the same pivot rule
// applies; the squared pivots carry rounding at the eps * G_jj level, which
// is why the Gram path compares pivots against sqrt(eps)-scale noise.
class GramSubproblem {
 public:
  GramSubproblem(std::span<const double> gram, std::span<const double> ctd,
                 std::size_t n, double pivot_tol)
      : g_(gram), b_(ctd), n_(n), pivot_tol_(pivot_tol) {}

  std::size_t cols() const { return n_; }

  void negative_gradient(std::span<const double> x, Vector& w) const {
    w.assign(b_.begin(), b_.end());
    for (std::size_t i = 0; i < n_; ++i) {
      const double* gi = g_.data() + i * n_;
      double s = 0.0;
      for (std::size_t j = 0; j < n_; ++j) s += gi[j] * x[j];
      w[i] -= s;
    }
  }

  double ctd_inf() const {
    double mx = 0.0;
    for (double v : b_) mx = std::max(mx, std::abs(v));
    return mx;
  }

  LsResult solve(std::span<const std::size_t> passive) const {
    const std::size_t q = passive.size();
    std::vector<double> l(q * q, 0.0);
    double max_diag = 0.0;
    for (auto p : passive) max_diag = std::max(max_diag, g_[p * n_ + p]);
    // Pivots are compared squared; rounding in G limits resolution to ~1e-8
    // relative in the pivot itself.
    const double rel = std::max(pivot_tol_, 1e-7);
    const double floor_sq = rel * rel * max_diag;

    LsResult out;
    for (std::size_t j = 0; j < q; ++j) {
      double s = g_[passive[j] * n_ + passive[j]];
      for (std::size_t k = 0; k < j; ++k) s -= l[j * q + k] * l[j * q + k];
      if (!(s > floor_sq)) {
        out.deficient = j;
        return out;
      }
      const double ljj = std::sqrt(s);
      l[j * q + j] = ljj;
      for (std::size_t i = j + 1; i < q; ++i) {
        double t = g_[passive[i] * n_ + passive[j]];
        for (std::size_t k = 0; k < j; ++k) t -= l[i * q + k] * l[j * q + k];
        l[i * q + j] = t / ljj;
      }
    }
    Vector y(q);
    for (std::size_t i = 0; i < q; ++i) {
      double s = b_[passive[i]];
      for (std::size_t k = 0; k < i; ++k) s -= l[i * q + k] * y[k];
      y[i] = s / l[i * q + i];
    }
    out.z.assign(q, 0.0);
    for (std::size_t i = q; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < q; ++k) s -= l[k * q + i] * out.z[k];
      out.z[i] = s / l[i * q + i];
    }
    return out;
  }

 private:
  std::span<const double> g_;
  std::span<const double> b_;
  std::size_t n_;
  double pivot_tol_;
};

struct ActiveSetResult {
  Vector x;
  std::size_t iterations = 0;
  std::vector<char> passive;
};

template <typename Subproblem>
ActiveSetResult lawson_hanson(const Subproblem& sub, const NnlsOptions& opt,
                              const std::string& context) {
  const std::size_t n = sub.cols();
  const std::size_t cap = opt.max_iter == 0 ? 3 * n : opt.max_iter;
  const double eps = opt.kkt_tol * (1.0 + sub.ctd_inf());

  ActiveSetResult res;
  res.x.assign(n, 0.0);
  res.passive.assign(n, 0);
  std::vector<std::size_t> order;  // passive set in insertion order
  std::vector<char> excluded(n, 0);
  Vector w;
  sub.negative_gradient(res.x, w);

  auto fail = [&]() {
    NnlsSolution best;
    best.x = res.x;
    best.iterations = res.iterations;
    for (std::size_t j = 0; j < n; ++j)
      if (!res.passive[j]) best.active_set.push_back(j);
    throw NnlsError(context + "NNLS iteration cap of " + std::to_string(cap) +
                        " exceeded (degenerate problem)",
                    std::move(best));
  };

  for (;;) {
    // Entering coordinate: largest w among eligible zeros, lowest index on ties.
    std::size_t t = n;
    double best = eps;
    for (std::size_t j = 0; j < n; ++j) {
      if (res.passive[j] || excluded[j]) continue;
      if (w[j] > best) {
        best = w[j];
        t = j;
      }
    }
    if (t == n) break;

    order.push_back(t);
    LsResult ls = sub.solve(order);
    if (ls.deficient || ls.z.back() <= 0.0) {
      // Dependent on the current passive columns, or no descent in exact
      // arithmetic: hold it out until the iterate moves.
      order.pop_back();
      excluded[t] = 1;
      continue;
    }
    if (++res.iterations > cap) fail();
    res.passive[t] = 1;

    for (;;) {
      bool feasible = true;
      for (double v : ls.z)
        if (v <= 0.0) feasible = false;
      if (feasible) {
        for (std::size_t q = 0; q < order.size(); ++q)
          res.x[order[q]] = ls.z[q];
        break;
      }
      // Step from x toward z until the first passive coordinate hits zero.
      double alpha = std::numeric_limits<double>::infinity();
      std::size_t blocking = 0;
      for (std::size_t q = 0; q < order.size(); ++q) {
        if (ls.z[q] > 0.0) continue;
        const double xq = res.x[order[q]];
        const double a = xq / (xq - ls.z[q]);
        if (a < alpha) {
          alpha = a;
          blocking = q;
        }
      }
      for (std::size_t q = 0; q < order.size(); ++q) {
        double& xq = res.x[order[q]];
        xq += alpha * (ls.z[q] - xq);
      }
      res.x[order[blocking]] = 0.0;
      std::vector<std::size_t> kept;
      kept.reserve(order.size());
      for (auto j : order) {
        if (res.x[j] > 0.0) {
          kept.push_back(j);
        } else {
          res.x[j] = 0.0;
          res.passive[j] = 0;
        }
      }
      order = std::move(kept);
      if (++res.iterations > cap) fail();
      if (order.empty()) break;
      ls = sub.solve(order);
      while (ls.deficient) {
        // Only reachable through rounding: the passive set was independent
        // before the removal.
        const std::size_t j = order[*ls.deficient];
        res.x[j] = 0.0;
        res.passive[j] = 0;
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(*ls.deficient));
        if (order.empty()) break;
        ls = sub.solve(order);
      }
      if (order.empty()) break;
    }
    std::fill(excluded.begin(), excluded.end(), 0);
    sub.negative_gradient(res.x, w);
  }
  return res;
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) {
    throw ValidationError(std::string("NNLS ") + what +
                          " contains non-finite entries");
  }
}

}  // namespace detail

inline NnlsSolution nnls(const Matrix& c, std::span<const double> d,
                         const NnlsOptions& opt = {}) {
  if (c.cols() == 0) throw ValidationError("NNLS design has no columns");
  if (c.rows() != d.size()) {
    throw ValidationError("NNLS design " + c.shape() +
                          " does not match right-hand side of length " +
                          std::to_string(d.size()));
  }
  detail::require_finite(c, "design");
  for (double v : d)
    if (!std::isfinite(v))
      throw ValidationError("NNLS right-hand side contains non-finite entries");

  detail::QrSubproblem sub(c, d, opt.pivot_tol);
  auto res = detail::lawson_hanson(sub, opt, "");

  NnlsSolution out;
  out.x = std::move(res.x);
  out.iterations = res.iterations;
  for (std::size_t j = 0; j < c.cols(); ++j)
    if (!res.passive[j]) out.active_set.push_back(j);
  double r2 = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    auto ci = c.row(i);
    double s = -d[i];
    for (std::size_t j = 0; j < c.cols(); ++j) s += ci[j] * out.x[j];
    r2 += s * s;
  }
  out.residual_sq = r2;
  return out;
}

// Column j of the result is the NNLS solution for column j of d.
inline Matrix nnls_multi(const Matrix& c, const Matrix& d,
                         const NnlsOptions& opt = {},
                         NnlsMethod method = NnlsMethod::gram) {
  if (c.cols() == 0) throw ValidationError("NNLS design has no columns");
  if (c.rows() != d.rows()) {
    throw ValidationError("NNLS design " + c.shape() +
                          " does not match right-hand sides " + d.shape());
  }
  detail::require_finite(c, "design");
  detail::require_finite(d, "right-hand sides");

  const std::size_t n = c.cols(), m = c.rows(), r = d.cols();
  Matrix z(n, r);
  auto context = [](std::size_t j) {
    return "column " + std::to_string(j) + ": ";
  };

  if (method == NnlsMethod::qr) {
    for (std::size_t j = 0; j < r; ++j) {
      const Vector dj = d.col(j);
      try {
        auto sol = nnls(c, dj, opt);
        for (std::size_t i = 0; i < n; ++i) z(i, j) = sol.x[i];
      } catch (const NnlsError& e) {
        throw NnlsError(context(j) + e.what(), e.best());
      }
    }
    return z;
  }

  // G = C^T C and B = C^T D, column j of B stored contiguously.
  std::vector<double> gram(n * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    auto ci = c.row(i);
    for (std::size_t a = 0; a < n; ++a) {
      const double v = ci[a];
      if (v == 0.0) continue;
      for (std::size_t b = 0; b < n; ++b) gram[a * n + b] += v * ci[b];
    }
  }
  std::vector<double> ctd(r * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    auto ci = c.row(i);
    auto di = d.row(i);
    for (std::size_t j = 0; j < r; ++j) {
      const double v = di[j];
      if (v == 0.0) continue;
      double* bj = ctd.data() + j * n;
      for (std::size_t a = 0; a < n; ++a) bj[a] += ci[a] * v;
    }
  }
  for (std::size_t j = 0; j < r; ++j) {
    detail::GramSubproblem sub(gram, std::span(ctd.data() + j * n, n), n,
                               opt.pivot_tol);
    auto res = detail::lawson_hanson(sub, opt, context(j));
    for (std::size_t i = 0; i < n; ++i) z(i, j) = res.x[i];
  }
  return z;
}

}  // namespace lpnmf
