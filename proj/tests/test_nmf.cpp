#include "catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lpnmf/nmf.hpp"
#include "lpnmf/synth.hpp"
#include "oracles.hpp"

using lpnmf::FactorPair;
using lpnmf::FitConfig;
using lpnmf::Matrix;
using lpnmf::RescaleMode;
using lpnmf::Vector;

namespace {

double product_gap(const FactorPair& a, const FactorPair& b) {
  const auto pa = lpnmf::multiply(a.p_mat, lpnmf::transpose(a.a_mat));
  const auto pb = lpnmf::multiply(b.p_mat, lpnmf::transpose(b.a_mat));
  return lpnmf::frobenius_sq(lpnmf::subtract(pa, pb)) / lpnmf::frobenius_sq(pa);
}

FactorPair random_pair(lpnmf::Rng& rng, std::size_t p, std::size_t n, std::size_t k) {
  FactorPair fp;
  fp.k = k;
  fp.p_mat = oracle::random_matrix(rng, p, k);
  fp.a_mat = oracle::random_matrix(rng, n, k);
  return fp;
}

}  // namespace

TEST_CASE("fit: exact rank-1 input is recovered", "[nmf]") {
  const auto x = lpnmf::multiply(Matrix::from_rows({{1}, {2}}), Matrix::from_rows({{3, 1}}));
  FitConfig cfg;
  cfg.k = 1;
  cfg.restarts = 3;
  const auto fp = lpnmf::fit(x, cfg);
  CHECK(fp.objective <= 1e-12);
  // Max rescaling puts the largest affinity at 1: a = (1, 1/3), p = (3, 6).
  CHECK_THAT(fp.a_mat(0, 0), Catch::Matchers::WithinRel(1.0, 1e-9));
  CHECK_THAT(fp.p_mat(1, 0), Catch::Matchers::WithinRel(6.0, 1e-9));
}

TEST_CASE("fit: zero input gives a zero product", "[nmf]") {
  const Matrix x(4, 5);
  for (std::size_t k : {1u, 2u, 4u}) {
    FitConfig cfg;
    cfg.k = k;
    cfg.restarts = 2;
    const auto fp = lpnmf::fit(x, cfg);
    CHECK(fp.objective == 0.0);
    CHECK(lpnmf::frobenius_sq(lpnmf::multiply(fp.p_mat, lpnmf::transpose(fp.a_mat))) == 0.0);
    CHECK(fp.converged);
    CHECK(fp.dead_patterns.size() == k);
  }
}

TEST_CASE("fit: recovers noiseless synthetic factors", "[nmf]") {
  lpnmf::SynthConfig sc;
  sc.p = 21;
  sc.n = 120;
  sc.k = 4;
  sc.seed = 12;
  const auto data = lpnmf::generate(sc);
  FitConfig cfg;
  cfg.k = 4;
  cfg.restarts = 20;
  cfg.seed = 5;
  const auto fp = lpnmf::fit(data.x, cfg);
  CHECK(std::sqrt(fp.objective / lpnmf::frobenius_sq(data.x)) <= 1e-2);
  CHECK(fp.restarts_used == 20);
  CHECK(fp.p_mat.row_names() == data.x.row_names());
  CHECK(fp.a_mat.row_names() == data.x.col_names());
}

TEST_CASE("fit: invariants on random data", "[nmf][property]") {
  lpnmf::Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::random_matrix(rng, 6 + rng.below(10), 8 + rng.below(20));
    FitConfig cfg;
    cfg.k = 1 + rng.below(5);
    cfg.restarts = 2;
    cfg.seed = rng.bits();
    cfg.rescale_mode = static_cast<RescaleMode>(rng.below(3));
    const auto fp = lpnmf::fit(x, cfg);
    for (double v : fp.p_mat.data()) REQUIRE(v >= 0.0);
    for (double v : fp.a_mat.data()) REQUIRE(v >= 0.0);
    for (std::size_t t = 1; t < fp.objective_trace.size(); ++t)
      REQUIRE(fp.objective_trace[t] <= fp.objective_trace[t - 1] + 1e-10);
    const double direct = lpnmf::frobenius_sq(
        lpnmf::subtract(x, lpnmf::multiply(fp.p_mat, lpnmf::transpose(fp.a_mat))));
    REQUIRE(std::abs(fp.objective - direct) <= 1e-9 * direct);
    REQUIRE(std::abs(fp.objective - fp.objective_trace.back()) <= 1e-9 * direct);

    const auto again = lpnmf::fit(x, cfg);
    REQUIRE(again.p_mat == fp.p_mat);
    REQUIRE(again.a_mat == fp.a_mat);
    REQUIRE(again.objective_trace == fp.objective_trace);
  }
}

TEST_CASE("fit: input validation", "[nmf]") {
  Matrix x(3, 4, 1.0);
  FitConfig cfg;
  cfg.k = 4;
  CHECK_THROWS_WITH(lpnmf::fit(x, cfg), Catch::Matchers::ContainsSubstring("[1, 3]"));
  cfg.k = 0;
  CHECK_THROWS_AS(lpnmf::fit(x, cfg), lpnmf::ValidationError);
  cfg.k = 2;
  x(1, 2) = -0.5;
  CHECK_THROWS_WITH(lpnmf::fit(x, cfg), Catch::Matchers::ContainsSubstring("negative"));
  x(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(lpnmf::fit(x, cfg), lpnmf::ValidationError);
  x(1, 2) = 1.0;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(lpnmf::fit(x, cfg), lpnmf::ValidationError);
  cfg.tol = 1e-6;
  cfg.restarts = 0;
  CHECK_THROWS_AS(lpnmf::fit(x, cfg), lpnmf::ValidationError);
}

TEST_CASE("fit_from: warm start from the truth stays put", "[nmf]") {
  lpnmf::SynthConfig sc;
  sc.n = 60;
  sc.k = 3;
  sc.noise_sd = 0.01;
  const auto data = lpnmf::generate(sc);
  FitConfig cfg;
  cfg.k = 3;
  const auto fp = lpnmf::fit_from(data.x, cfg, data.p_true);
  CHECK(fp.converged);
  CHECK(fp.restarts_used == 1);
  CHECK(std::sqrt(fp.objective / lpnmf::frobenius_sq(data.x)) < 0.05);
  CHECK_THROWS_AS(lpnmf::fit_from(data.x, cfg, Matrix(2, 3)), lpnmf::ValidationError);
}

TEST_CASE("rescale: none is the identity", "[nmf]") {
  lpnmf::Rng rng(1);
  const auto fp = random_pair(rng, 5, 7, 3);
  const auto out = lpnmf::rescale(fp, RescaleMode::none);
  CHECK(out.p_mat == fp.p_mat);
  CHECK(out.a_mat == fp.a_mat);
}

TEST_CASE("rescale: max mode divides affinities by the column maximum", "[nmf]") {
  FactorPair fp;
  fp.k = 1;
  fp.a_mat = Matrix::from_rows({{0.2}, {0.4}, {0.8}});
  fp.p_mat = Matrix::from_rows({{1.0}, {0.5}});
  const auto out = lpnmf::rescale(fp, RescaleMode::max);
  CHECK(out.a_mat.col(0) == Vector{0.25, 0.5, 1.0});
  CHECK_THAT(out.p_mat(0, 0), Catch::Matchers::WithinRel(0.8, 1e-15));
  CHECK_THAT(out.p_mat(1, 0), Catch::Matchers::WithinRel(0.4, 1e-15));
}

TEST_CASE("rescale: mean mode gives unit column means", "[nmf]") {
  FactorPair fp;
  fp.k = 2;
  fp.a_mat = Matrix::from_rows({{0.2, 0.0}, {0.4, 0.0}, {0.6, 0.0}});
  fp.p_mat = Matrix::from_rows({{1.0, 2.0}});
  const auto out = lpnmf::rescale(fp, RescaleMode::mean);
  CHECK_THAT(out.a_mat(1, 0), Catch::Matchers::WithinRel(1.0, 1e-15));
  CHECK_THAT(out.p_mat(0, 0), Catch::Matchers::WithinRel(0.4, 1e-15));
  // Zero column untouched and flagged.
  CHECK(out.p_mat(0, 1) == 2.0);
  CHECK(out.dead_patterns == std::vector<std::size_t>{1});
}

TEST_CASE("rescale: product and affinity ordering are preserved", "[nmf][property]") {
  lpnmf::Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const auto fp = random_pair(rng, 3 + rng.below(20), 3 + rng.below(40), 1 + rng.below(8));
    for (auto mode : {RescaleMode::max, RescaleMode::mean, RescaleMode::none}) {
      const auto out = lpnmf::rescale(fp, mode);
      REQUIRE(product_gap(fp, out) <= 1e-20);
      for (std::size_t c = 0; c < fp.k; ++c) {
        const auto before = fp.a_mat.col(c), after = out.a_mat.col(c);
        REQUIRE(std::max_element(before.begin(), before.end()) - before.begin() ==
                std::max_element(after.begin(), after.end()) - after.begin());
      }
    }
  }
  CHECK_THROWS_AS(lpnmf::parse_rescale_mode("median"), lpnmf::ValidationError);
  CHECK(lpnmf::parse_rescale_mode("mean") == RescaleMode::mean);
}

TEST_CASE("reconstruct: trivial cases", "[nmf]") {
  FactorPair fp;
  fp.k = 2;
  fp.p_mat = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  fp.a_mat = Matrix::from_rows({{0, 0}, {1, 0}});
  CHECK(lpnmf::reconstruct(fp, 0) == Vector{0, 0, 0});
  CHECK(lpnmf::reconstruct(fp, 1) == fp.p_mat.col(0));
  CHECK_THROWS_AS(lpnmf::reconstruct(fp, 2), lpnmf::ValidationError);
}

TEST_CASE("reconstruct: eight-pattern affinity vector matches a loop oracle", "[nmf]") {
  lpnmf::SynthConfig sc;
  sc.n = 111;
  sc.k = 8;
  sc.noise_sd = 0.02;
  const auto data = lpnmf::generate(sc);
  FitConfig cfg;
  cfg.k = 8;
  cfg.restarts = 2;
  auto fp = lpnmf::fit(data.x, cfg);
  const Vector affinity{0.06, 0.3, 0.42, 0.64, 0.19, 0, 0, 0.21};
  for (std::size_t c = 0; c < 8; ++c) fp.a_mat(0, c) = affinity[c];
  const auto got = lpnmf::reconstruct(fp, 0);
  for (std::size_t i = 0; i < 21; ++i) {
    long double want = 0;
    for (std::size_t c = 0; c < 8; ++c) want += (long double)affinity[c] * fp.p_mat(i, c);
    CHECK(std::abs(got[i] - static_cast<double>(want)) <= 1e-12);
  }
}

TEST_CASE("reconstruct: exactly factorizable data is reproduced per learner", "[nmf]") {
  // Separable patterns with disjoint supports.
  const auto p = Matrix::from_rows({{1, 0}, {0.5, 0}, {0, 1}, {0, 0.25}, {0.2, 0.3}});
  lpnmf::Rng rng(9);
  const auto a = oracle::random_matrix(rng, 12, 2, 0.1, 1.0);
  const auto x = lpnmf::multiply(p, lpnmf::transpose(a));
  FitConfig cfg;
  cfg.k = 2;
  cfg.restarts = 5;
  cfg.tol = 1e-15;
  cfg.max_iter = 5000;
  const auto fp = lpnmf::fit(x, cfg);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const auto r = lpnmf::reconstruct(fp, j);
    const auto col = x.col(j);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < col.size(); ++i) {
      num += (r[i] - col[i]) * (r[i] - col[i]);
      den += col[i] * col[i];
    }
    CHECK(std::sqrt(num / den) <= 1e-6);
  }
}
