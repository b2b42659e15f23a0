#include "catch_amalgamated.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "json.hpp"
#include "lpnmf/lpnmf.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = lpnmf::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("lpnmf_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

using Table = std::vector<std::vector<std::string>>;

Table read_csv(const std::string& path) {
  Table t;
  for (auto& r : lpnmf::csv::parse(lpnmf::read_text(path), path)) t.push_back(r.cells);
  return t;
}

std::size_t column(const Table& t, const std::string& name) {
  auto it = std::find(t[0].begin(), t[0].end(), name);
  REQUIRE(it != t[0].end());
  return static_cast<std::size_t>(it - t[0].begin());
}

double num(const std::string& s) { return std::stod(s); }

nlohmann::json read_json(const std::string& path) {
  return nlohmann::json::parse(lpnmf::read_text(path));
}

// simulate + fit into `dir`; returns the fit result.
Result simulate_and_fit(const TempDir& dir, const std::vector<std::string>& sim,
                        const std::vector<std::string>& fit, const std::string& seed = "1") {
  std::vector<std::string> a{"--quiet", "--seed", seed, "--out-dir", dir.path.string(), "simulate"};
  a.insert(a.end(), sim.begin(), sim.end());
  REQUIRE(cli(a).code == 0);
  std::vector<std::string> b{"--quiet", "--seed",  seed, "--out-dir", dir.path.string(),
                             "fit",     "--input", dir / "matrix.csv"};
  b.insert(b.end(), fit.begin(), fit.end());
  return cli(b);
}

}  // namespace

TEST_CASE("cli: fit on a noisy synthetic fixture converges") {
  TempDir d;
  auto r = simulate_and_fit(d, {"--k", "4", "--noise-sd", "0.01"}, {"--k", "4"});
  REQUIRE(r.code == 0);
  auto meta = read_json(d / "meta.json");
  CHECK(meta["converged"] == true);
  CHECK(meta["k"] == 4);
  CHECK(meta["scaling"]["row_maxima"].size() == 21);
  CHECK(fs::exists(d / "manifest_fit.json"));
  CHECK(fs::exists(d / "manifest_simulate.json"));
}

TEST_CASE("cli: k beyond min(p, n) exits 1 naming the bound") {
  TempDir d;
  auto r = simulate_and_fit(d, {"--p", "6", "--n", "30", "--k", "2"}, {"--k", "7"});
  CHECK(r.code == 1);
  CHECK_THAT(r.err, ContainsSubstring("min(p, n)"));
  CHECK_THAT(r.err, ContainsSubstring("[1, 6]"));
  auto manifest = read_json(d / "manifest_fit.json");
  CHECK(manifest["status"] == "error");
  CHECK(manifest["exit_code"] == 1);
}

TEST_CASE("cli: identical fit commands give byte-identical factors") {
  TempDir a, b;
  REQUIRE(simulate_and_fit(a, {"--k", "3", "--noise-sd", "0.02"}, {"--k", "3"}).code == 0);
  REQUIRE(simulate_and_fit(b, {"--k", "3", "--noise-sd", "0.02"}, {"--k", "3"}).code == 0);
  for (const char* f : {"matrix.csv", "patterns.csv", "affinities.csv", "meta.json"})
    CHECK(lpnmf::read_text(a / f) == lpnmf::read_text(b / f));
  auto ma = read_json(a / "manifest_fit.json"), mb = read_json(b / "manifest_fit.json");
  CHECK(ma["outputs"][0]["sha256"] == mb["outputs"][0]["sha256"]);
  CHECK(ma["outputs"][0]["sha256"] == lpnmf::cli::file_digest(a / "patterns.csv"));
}

TEST_CASE("cli: fit options") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "2", "--p", "8", "--n", "20"},
                           {"--k", "2", "--labels", "active,visual", "--rescale", "mean",
                            "--no-scale", "--restarts", "2"})
              .code == 0);
  auto p = read_csv(d / "patterns.csv");
  CHECK(p[0] == std::vector<std::string>{"feature", "active", "visual"});
  auto meta = read_json(d / "meta.json");
  CHECK(meta["rescale_mode"] == "mean");
  CHECK_FALSE(meta.contains("scaling"));

  auto bad = cli({"--out-dir", d.path.string(), "fit", "--input", d / "matrix.csv", "--k", "2",
                  "--labels", "one"});
  CHECK(bad.code == 1);
  auto schema = cli({"--out-dir", d.path.string(), "fit", "--input", d / "matrix.csv", "--k", "2",
                     "--schema", "builtin"});
  CHECK(schema.code == 1);
  CHECK_THAT(schema.err, ContainsSubstring("not in the schema"));
}

TEST_CASE("cli: ci shape and zero width at B = 1") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "3", "--noise-sd", "0.01"}, {"--k", "3"}).code == 0);
  auto r = cli({"--quiet", "--out-dir", d.path.string(), "ci", "--input", d / "matrix.csv",
                "--b", "1"});
  REQUIRE(r.code == 0);
  auto t = read_csv(d / "ci.csv");
  CHECK(t[0] == std::vector<std::string>{"feature", "pattern", "boot_mean", "lower", "upper"});
  CHECK(t.size() == 1 + 21 * 3);
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i][3] == t[i][4]);
  for (const char* s : {"ci_pattern_1.svg", "ci_pattern_2.svg", "ci_pattern_3.svg"}) {
    REQUIRE(fs::exists(d / s));
    const auto svg = lpnmf::read_text(d / s);
    std::size_t bars = 0, pos = 0;
    while ((pos = svg.find("class=\"bar", pos)) != std::string::npos) ++bars, ++pos;
    CHECK(bars == 21);
  }
}

TEST_CASE("cli: ci rejects data that does not match the fit") {
  TempDir d, other;
  REQUIRE(simulate_and_fit(d, {"--k", "2", "--n", "40"}, {"--k", "2"}).code == 0);
  REQUIRE(cli({"--quiet", "--out-dir", other.path.string(), "simulate", "--k", "2", "--n", "41"})
              .code == 0);
  auto r = cli({"--quiet", "--out-dir", d.path.string(), "ci", "--input", other / "matrix.csv",
                "--b", "5"});
  CHECK(r.code == 1);
  CHECK_THAT(r.err, ContainsSubstring("learners do not match"));
}

TEST_CASE("cli: median ci width shrinks from n = 100 to n = 400") {
  auto median_width = [](std::size_t n) {
    TempDir d;
    REQUIRE(simulate_and_fit(d, {"--k", "3", "--n", std::to_string(n), "--noise-sd", "0.02"},
                             {"--k", "3", "--restarts", "5"})
                .code == 0);
    REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "ci", "--input", d / "matrix.csv",
                 "--b", "100"})
                .code == 0);
    auto t = read_csv(d / "ci.csv");
    std::vector<double> w;
    for (std::size_t i = 1; i < t.size(); ++i) w.push_back(num(t[i][4]) - num(t[i][3]));
    return lpnmf::empirical_quantile(w, 0.5);
  };
  CHECK(median_width(400) < median_width(100));
}

TEST_CASE("cli: planted shift is starred in the matching one-sided set") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "4", "--noise-sd", "0.01", "--group-shift", "3,0.4,0.5"},
                           {"--k", "4"})
              .code == 0);
  auto r = cli({"--out-dir", d.path.string(), "test", "--groups", d / "groups.csv", "--b", "2000"});
  REQUIRE(r.code == 0);

  // Fitted pattern matched to the planted one.
  auto truth = lpnmf::load_matrix(d / "p_true.csv", lpnmf::Orientation::features_as_rows);
  auto fp = lpnmf::load_factors(d.path);
  const auto al = lpnmf::align_patterns(fp.p_mat, truth);
  std::size_t planted = 0;
  for (std::size_t c = 0; c < al.perm.size(); ++c)
    if (al.perm[c] == 2) planted = c;

  auto t = read_csv(d / "test.csv");
  CHECK(t[0] == std::vector<std::string>{"pattern", "group_mean_f", "group_mean_p", "pooled_sd",
                                         "diff", "p_two_sided", "p_greater", "p_less"});
  const auto& row = t[1 + planted];
  CHECK(num(row[column(t, "p_greater")]) < 0.05);
  CHECK(num(row[column(t, "diff")]) > 0.0);
  CHECK(lpnmf::significance_stars(num(row[column(t, "p_greater")])).size() >= 2);

  const auto summary = lpnmf::read_text(d / "test_summary.txt");
  CHECK_THAT(summary, ContainsSubstring("**"));
  CHECK_THAT(summary, ContainsSubstring("significance: *** p < 0.01"));
  CHECK_THAT(r.out, ContainsSubstring(row[0]));
}

TEST_CASE("cli: swapping group labels exchanges the one-sided p-values") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "3", "--noise-sd", "0.01", "--group-shift", "1,0.2,0.4"},
                           {"--k", "3"})
              .code == 0);
  auto groups = read_csv(d / "groups.csv");
  std::string swapped = "id,group\n";
  for (std::size_t i = 1; i < groups.size(); ++i)
    swapped += groups[i][0] + "," + (groups[i][1] == "f" ? "p" : "f") + "\n";
  lpnmf::write_text(d / "swapped.csv", swapped);

  REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "test", "--groups", d / "groups.csv",
               "--b", "500"})
              .code == 0);
  auto t1 = read_csv(d / "test.csv");
  REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "test", "--groups", d / "swapped.csv",
               "--b", "500"})
              .code == 0);
  auto t2 = read_csv(d / "test.csv");
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 1; i < t1.size(); ++i) {
    CHECK(num(t1[i][4]) == -num(t2[i][4]));
    CHECK(t1[i][5] == t2[i][5]);
    CHECK(t1[i][6] == t2[i][7]);
    CHECK(t1[i][7] == t2[i][6]);
    CHECK(t1[i][1] == t2[i][2]);
  }
}

TEST_CASE("cli: null fixtures are rarely starred at 1%") {
  // 20 seeded runs without a plant; every pattern must stay unstarred at the
  // 1% level in at least 18 of them.
  const std::size_t runs = 20, k = 4;
  std::vector<std::size_t> starred(k, 0);
  for (std::size_t s = 0; s < runs; ++s) {
    TempDir d;
    const std::string seed = std::to_string(100 + s);
    REQUIRE(simulate_and_fit(d, {"--k", "4", "--noise-sd", "0.01"},
                             {"--k", "4", "--restarts", "3"}, seed)
                .code == 0);
    REQUIRE(cli({"--quiet", "--seed", seed, "--out-dir", d.path.string(), "test", "--groups",
                 d / "groups.csv", "--b", "1000"})
                .code == 0);
    auto t = read_csv(d / "test.csv");
    for (std::size_t c = 0; c < k; ++c) starred[c] += num(t[1 + c][5]) < 0.01;
  }
  for (std::size_t c = 0; c < k; ++c) CHECK(starred[c] <= runs / 10);
}

TEST_CASE("cli: test refit mode needs the data") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "2", "--n", "30"}, {"--k", "2", "--restarts", "2"}).code == 0);
  auto r = cli({"--quiet", "--out-dir", d.path.string(), "test", "--groups", d / "groups.csv",
                "--mode", "refit", "--b", "5"});
  CHECK(r.code == 1);
  CHECK_THAT(r.err, ContainsSubstring("--input"));
  auto ok = cli({"--quiet", "--out-dir", d.path.string(), "test", "--groups", d / "groups.csv",
                 "--mode", "refit", "--input", d / "matrix.csv", "--b", "5"});
  CHECK(ok.code == 0);
}

TEST_CASE("cli: invalid grouping exits 1") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "2", "--n", "30"}, {"--k", "2", "--restarts", "2"}).code == 0);
  lpnmf::write_text(d / "bad.csv", "id,group\nL001,f\n");
  auto r = cli({"--quiet", "--out-dir", d.path.string(), "test", "--groups", d / "bad.csv"});
  CHECK(r.code == 1);
  CHECK_THAT(r.err, ContainsSubstring("no group label"));
}

TEST_CASE("cli: reconstruct") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "4", "--n", "120"}, {"--k", "4", "--restarts", "20"}).code ==
          0);
  auto fp = lpnmf::load_factors(d.path);
  auto [x, rec] = lpnmf::scale_rows(lpnmf::load_matrix(d / "matrix.csv"));

  SECTION("matches the loop oracle and the data") {
    double num2 = 0, den2 = 0;
    for (std::size_t j = 0; j < fp.a_mat.rows(); ++j) {
      const std::string id = fp.a_mat.row_names()[j];
      REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "reconstruct", "--learner", id,
                   "--input", d / "matrix.csv"})
                  .code == 0);
      auto t = read_csv(d / ("reconstruct_" + id + ".csv"));
      REQUIRE(t.size() == 1 + 21);
      for (std::size_t i = 0; i < 21; ++i) {
        double oracle_v = 0;
        for (std::size_t c = 0; c < 4; ++c) oracle_v += fp.p_mat(i, c) * fp.a_mat(j, c);
        const double modeled = num(t[1 + i][2]);
        CHECK(std::abs(modeled - oracle_v) <= 1e-12);
        CHECK(num(t[1 + i][1]) == x(i, j));
        num2 += (modeled - x(i, j)) * (modeled - x(i, j));
        den2 += x(i, j) * x(i, j);
      }
    }
    CHECK(std::sqrt(num2 / den2) <= 1e-2);
  }
  SECTION("svg and affinity row") {
    auto r = cli({"--out-dir", d.path.string(), "reconstruct", "--learner", "L007", "--svg"});
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("affinities:"));
    auto aff = read_csv(d / "reconstruct_L007_affinity.csv");
    REQUIRE(aff.size() == 5);
    CHECK(num(aff[2][1]) == fp.a_mat(6, 1));
    const auto svg = lpnmf::read_text(d / "reconstruct_L007.svg");
    std::size_t live = 0;
    for (std::size_t c = 0; c < 4; ++c) live += fp.a_mat(6, c) > 0;
    std::size_t panels = 0, pos = 0;
    while ((pos = svg.find("class=\"panel\"", pos)) != std::string::npos) ++panels, ++pos;
    CHECK(panels == 1 + live);
  }
  SECTION("unknown learner") {
    auto r = cli({"--out-dir", d.path.string(), "reconstruct", "--learner", "nobody"});
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("unknown learner 'nobody'"));
  }
}

TEST_CASE("cli: reconstruct of an all-zero learner is zero") {
  TempDir d;
  lpnmf::FactorPair fp;
  fp.k = 2;
  fp.p_mat = lpnmf::Matrix::from_rows({{1, 0.5}, {0.2, 1}});
  fp.p_mat.set_row_names({"a", "b"});
  fp.a_mat = lpnmf::Matrix::from_rows({{1, 0}, {0, 0}});
  fp.a_mat.set_row_names({"L1", "L2"});
  fp.objective_trace = {0.0};
  lpnmf::save_factors(fp, d.path);
  REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "reconstruct", "--learner", "L2"}).code ==
          0);
  auto t = read_csv(d / "reconstruct_L2.csv");
  CHECK(t[0] == std::vector<std::string>{"feature", "modeled"});
  CHECK(t[1][1] == "0");
  CHECK(t[2][1] == "0");
}

TEST_CASE("cli: simulate outputs") {
  TempDir d;
  REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "simulate"}).code == 0);
  for (const char* f : {"matrix.csv", "groups.csv", "p_true.csv", "a_true.csv"})
    CHECK(fs::exists(d / f));
  auto x = lpnmf::load_matrix(d / "matrix.csv");
  CHECK(x.rows() == 21);
  CHECK(x.cols() == 111);
  auto g = lpnmf::load_groups(d / "groups.csv", x.col_names());
  CHECK(g.count("f") + g.count("p") == 111);

  // Noise-free data is exactly the product of the stored factors.
  auto p = lpnmf::load_matrix(d / "p_true.csv", lpnmf::Orientation::features_as_rows);
  auto a = lpnmf::load_matrix(d / "a_true.csv", lpnmf::Orientation::features_as_rows);
  CHECK(lpnmf::multiply(p, lpnmf::transpose(a)) == x);

  auto bad = cli({"--quiet", "--out-dir", d.path.string(), "simulate", "--k", "3",
                  "--group-shift", "4,0.3,0.5"});
  CHECK(bad.code == 1);
  auto bad2 = cli({"--quiet", "--out-dir", d.path.string(), "simulate", "--zero-prob", "1.5"});
  CHECK(bad2.code == 1);
}

TEST_CASE("cli: summary layout and values") {
  TempDir d;
  REQUIRE(simulate_and_fit(d, {"--k", "3", "--noise-sd", "0.01"}, {"--k", "3"}).code == 0);
  REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "summary"}).code == 0);
  auto t = read_csv(d / "summary.csv");
  CHECK(t[0] == std::vector<std::string>{"pattern", "k", "q25", "mean", "q50", "q75"});
  auto fp = lpnmf::load_factors(d.path);
  const auto s = lpnmf::affinity_summary(fp.a_mat);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(t[1 + c][1] == std::to_string(c + 1));
    CHECK(num(t[1 + c][2]) == s.patterns[c].q25);
    CHECK(num(t[1 + c][3]) == s.patterns[c].mean);
    CHECK(num(t[1 + c][4]) == s.patterns[c].q50);
    CHECK(num(t[1 + c][5]) == s.patterns[c].q75);
  }
  REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "summary", "--groups", d / "groups.csv"})
              .code == 0);
  auto tg = read_csv(d / "summary.csv");
  CHECK(tg[0].back() == "pooled_sd");
  CHECK(tg[0][6] == "mean_f");
}

TEST_CASE("cli: summary of a constant affinity column") {
  TempDir d;
  lpnmf::FactorPair fp;
  fp.k = 1;
  fp.p_mat = lpnmf::Matrix::from_rows({{1}, {0.5}});
  fp.p_mat.set_row_names({"a", "b"});
  fp.a_mat = lpnmf::Matrix(5, 1, 0.75);
  fp.a_mat.set_row_names({"L1", "L2", "L3", "L4", "L5"});
  fp.objective_trace = {0.0};
  lpnmf::save_factors(fp, d.path);
  REQUIRE(cli({"--quiet", "--out-dir", d.path.string(), "summary"}).code == 0);
  auto t = read_csv(d / "summary.csv");
  for (std::size_t c = 2; c <= 5; ++c) CHECK(t[1][c] == "0.75");
}

TEST_CASE("cli: process exit codes") {
  const std::string exe = LPNMF_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  TempDir d;
  CHECK(status(exe + " --help") == 0);
  CHECK(status(exe + " --version") == 0);
  CHECK(status(exe) == 1);
  CHECK(status(exe + " frobnicate") == 1);
  CHECK(status(exe + " --out-dir " + d.path.string() + " fit --input " + d / "absent.csv") == 1);
  CHECK(status(exe + " --quiet --out-dir " + d.path.string() + " simulate --k 2") == 0);
  CHECK(status(exe + " --quiet --out-dir " + d.path.string() + " fit --k 2 --input " +
               d / "matrix.csv") == 0);
}
