#include "commands.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lpnmf/lpnmf.hpp"

namespace lpnmf::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

std::string format(const char* f, ...) {
  va_list ap, ap2;
  va_start(ap, f);
  va_copy(ap2, ap);
  const int n = std::vsnprintf(nullptr, 0, f, ap);
  va_end(ap);
  std::string s(static_cast<std::size_t>(n), '\0');
  std::vsnprintf(s.data(), s.size() + 1, f, ap2);
  va_end(ap2);
  return s;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return out;
}

struct Global {
  std::uint64_t seed = 1;
  fs::path out_dir = ".";
  bool quiet = false;
};

class Run {
 public:
  Run(std::string command, const Global& g, const std::vector<std::string>& args,
      std::ostream& out, std::ostream& err)
      : command_(std::move(command)), g_(g), args_(args), out_(out), err_(err),
        start_(std::chrono::steady_clock::now()) {}

  const Global& global() const { return g_; }
  std::ostream& out() { return g_.quiet ? null_ : out_; }
  std::ostream& err() { return err_; }
  ordered_json& config() { return config_; }

  void input(const fs::path& p) { inputs_.push_back(p); }

  // Records a written file (path relative to the output directory).
  fs::path output(const std::string& name) {
    outputs_.push_back(name);
    return g_.out_dir / name;
  }

  std::function<void(std::size_t, std::size_t)> progress(const std::string& what) {
    if (g_.quiet) return {};
    return [this, what](std::size_t done, std::size_t total) {
      const std::size_t step = std::max<std::size_t>(1, total / 10);
      if (done % step == 0 || done == total)
        err_ << what << ": " << done << "/" << total << " replications\n";
    };
  }

  void write_manifest(int code, const std::string& message) {
    ordered_json m;
    m["command"] = command_;
    m["version"] = LPNMF_VERSION;
    m["arguments"] = args_;
    m["seed"] = g_.seed;
    m["config"] = config_;
    m["inputs"] = ordered_json::array();
    for (const auto& p : inputs_) {
      ordered_json e{{"path", p.string()}};
      if (fs::is_regular_file(p)) e["sha256"] = file_digest(p);
      m["inputs"].push_back(e);
    }
    m["outputs"] = ordered_json::array();
    for (const auto& name : outputs_) {
      const fs::path p = g_.out_dir / name;
      ordered_json e{{"path", name}};
      if (fs::is_regular_file(p)) e["sha256"] = file_digest(p);
      m["outputs"].push_back(e);
    }
    m["status"] = code == 0 ? "ok" : "error";
    m["exit_code"] = code;
    if (!message.empty()) m["message"] = message;
    m["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::error_code ec;
    fs::create_directories(g_.out_dir, ec);
    if (ec) return;
    std::ofstream f(g_.out_dir / ("manifest_" + command_ + ".json"), std::ios::trunc);
    f << m.dump(2) << "\n";
  }

 private:
  struct NullBuf : std::streambuf {
    int overflow(int c) override { return c; }
  };
  std::string command_;
  Global g_;
  std::vector<std::string> args_;
  std::ostream& out_;
  std::ostream& err_;
  NullBuf null_buf_;
  std::ostream null_{&null_buf_};
  std::chrono::steady_clock::time_point start_;
  ordered_json config_ = ordered_json::object();
  std::vector<fs::path> inputs_;
  Names outputs_;
};

void ensure_out_dir(const Global& g) {
  std::error_code ec;
  fs::create_directories(g.out_dir, ec);
  if (ec) throw Error("cannot create output directory " + g.out_dir.string() + ": " + ec.message());
}

struct Factors {
  FactorPair fp;
  FactorsMeta meta;
};

Factors read_factors(Run& run, const fs::path& dir) {
  Factors f;
  f.fp = load_factors(dir, &f.meta);
  for (const char* name : {"patterns.csv", "affinities.csv", "meta.json"}) run.input(dir / name);
  return f;
}

// Loads the data a fit was made from and applies the scaling recorded then.
Matrix read_fitted_data(Run& run, const fs::path& path, Orientation orientation,
                        const Factors& f) {
  run.input(path);
  Matrix x = load_matrix(path, orientation);
  if (x.row_names() != f.fp.p_mat.row_names())
    throw ValidationError(path.string() + ": features do not match the fitted patterns");
  if (x.col_names() != f.fp.a_mat.row_names())
    throw ValidationError(path.string() + ": learners do not match the fitted affinities");
  if (!f.meta.scaling) return x;
  auto [scaled, rec] = scale_rows(x);
  if (rec.row_maxima != f.meta.scaling->row_maxima)
    throw ValidationError(path.string() + ": row maxima differ from those recorded at fit time");
  return scaled;
}

BootstrapInit parse_init(const std::string& s) {
  if (s == "warm") return BootstrapInit::warm;
  if (s == "random") return BootstrapInit::random;
  throw ValidationError("unknown init '" + s + "' (expected warm or random)");
}

FitConfig fit_config_of(const FactorPair& fp) {
  FitConfig cfg = fp.config;
  cfg.k = fp.p_mat.cols();
  return cfg;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string input;
  std::size_t k = 8;
  std::size_t restarts = 10;
  double tol = 1e-6;
  std::size_t max_iter = 500;
  std::string rescale = "max";
  bool no_scale = false;
  std::vector<std::string> labels;
  std::string schema;
  std::string orientation = "learners_as_rows";
};

void cmd_fit(Run& run, const FitArgs& a) {
  const Global& g = run.global();
  FitConfig cfg;
  cfg.k = a.k;
  cfg.seed = g.seed;
  cfg.tol = a.tol;
  cfg.max_iter = a.max_iter;
  cfg.restarts = a.restarts;
  cfg.rescale_mode = parse_rescale_mode(a.rescale);
  const Orientation orientation = parse_orientation(a.orientation);
  run.config() = {{"input", a.input},     {"orientation", a.orientation},
                  {"k", a.k},             {"restarts", a.restarts},
                  {"tol", a.tol},         {"max_iter", a.max_iter},
                  {"rescale", a.rescale}, {"scale_rows", !a.no_scale},
                  {"labels", a.labels},   {"schema", a.schema}};
  cfg.validate();

  run.input(a.input);
  std::vector<std::string> warnings;
  Matrix x = load_matrix(a.input, orientation, &warnings);
  for (const auto& w : warnings) run.err() << "warning: " << w << "\n";
  if (!a.schema.empty()) {
    if (a.schema == "builtin") {
      builtin_schema().validate(x.row_names());
    } else {
      run.input(a.schema);
      load_schema(a.schema).validate(x.row_names());
    }
  }
  std::optional<ScalingRecord> scaling;
  if (!a.no_scale) {
    auto [scaled, rec] = scale_rows(x);
    x = std::move(scaled);
    scaling = std::move(rec);
  }
  detail::validate_k(x, cfg.k);
  if (!a.labels.empty()) detail::checked_labels(a.labels, cfg.k);

  const FactorPair fp = fit(x, cfg);
  ensure_out_dir(g);
  save_factors(fp, g.out_dir, a.labels, scaling);
  for (const char* name : {"patterns.csv", "affinities.csv", "meta.json"}) run.output(name);

  run.out() << format("objective %.10g after %zu sweeps (%s); best of %zu restarts is #%zu\n",
                      fp.objective, fp.iterations,
                      fp.converged ? "converged" : "iteration cap reached", fp.restarts_used,
                      fp.best_restart + 1);
  for (auto c : fp.dead_patterns)
    run.err() << "warning: pattern " << c + 1 << " has zero affinity for every learner\n";
}

// ---------------------------------------------------------------- ci

struct BootArgs {
  std::string factors;
  std::string input;
  std::string groups;
  std::size_t b = 10000;
  double level = 0.99;
  std::string mode;
  std::string init = "warm";
  std::size_t boot_restarts = 0;
  std::string orientation = "learners_as_rows";
};

FitConfig replication_config(const FactorPair& fp, const BootArgs& a) {
  FitConfig cfg = fit_config_of(fp);
  if (a.boot_restarts > 0) cfg.restarts = a.boot_restarts;
  return cfg;
}

void cmd_ci(Run& run, const BootArgs& a) {
  const Global& g = run.global();
  const fs::path dir = a.factors.empty() ? g.out_dir : fs::path(a.factors);
  run.config() = {{"factors", dir.string()}, {"input", a.input},   {"orientation", a.orientation},
                  {"b", a.b},                {"level", a.level},   {"mode", a.mode},
                  {"init", a.init},          {"boot_restarts", a.boot_restarts}};
  BootstrapConfig bc;
  bc.b = a.b;
  bc.level = a.level;
  bc.seed = g.seed;
  bc.refit = a.mode == "refit";
  bc.init = parse_init(a.init);
  bc.validate();

  const Factors f = read_factors(run, dir);
  const Matrix x = read_fitted_data(run, a.input, parse_orientation(a.orientation), f);
  bc.progress = run.progress("ci");
  const CoefficientCI ci = bootstrap_ci(x, replication_config(f.fp, a), bc, f.fp);

  ensure_out_dir(g);
  const Names& features = f.fp.p_mat.row_names();
  const Names& labels = f.fp.p_mat.col_names();
  std::string csv_text = "feature,pattern,boot_mean,lower,upper\n";
  for (std::size_t c = 0; c < labels.size(); ++c)
    for (std::size_t i = 0; i < features.size(); ++i)
      csv_text += csv::join({features[i], labels[c], format_double(ci.boot_mean(i, c)),
                             format_double(ci.lower(i, c)), format_double(ci.upper(i, c))}) +
                  "\n";
  write_text(run.output("ci.csv"), csv_text);

  for (std::size_t c = 0; c < labels.size(); ++c) {
    const std::string title = labels[c] + format(" (%g%% bootstrap intervals, B = %zu)",
                                                 100.0 * a.level, a.b);
    const std::string svg_text = svg::interval_plot(title, features, ci.boot_mean.col(c),
                                                    ci.lower.col(c), ci.upper.col(c));
    write_text(run.output("ci_" + safe_name(labels[c]) + ".svg"), svg_text);
  }

  auto& o = run.out();
  o << format("%zu replications (%s), level %g\n", a.b, a.mode.c_str(), a.level);
  for (std::size_t c = 0; c < labels.size(); ++c) {
    std::size_t defining = 0;
    for (std::size_t i = 0; i < features.size(); ++i) defining += ci.lower(i, c) > 0.0;
    o << format("%-16s mean alignment %.3f, %zu features with lower bound > 0\n",
                labels[c].c_str(), ci.mean_similarity[c], defining);
  }
  if (ci.failed_attempts)
    run.err() << "warning: " << ci.failed_attempts << " replication attempts were redrawn\n";
}

// ---------------------------------------------------------------- test

void cmd_test(Run& run, const BootArgs& a) {
  const Global& g = run.global();
  const fs::path dir = a.factors.empty() ? g.out_dir : fs::path(a.factors);
  run.config() = {{"factors", dir.string()}, {"groups", a.groups}, {"input", a.input},
                  {"orientation", a.orientation}, {"b", a.b},      {"mode", a.mode},
                  {"init", a.init},          {"boot_restarts", a.boot_restarts}};
  BootstrapConfig bc;
  bc.b = a.b;
  bc.seed = g.seed;
  bc.refit = a.mode == "refit";
  bc.init = parse_init(a.init);
  bc.validate();
  if (bc.refit && a.input.empty())
    throw ValidationError("--mode refit needs the data matrix (--input)");

  const Factors f = read_factors(run, dir);
  run.input(a.groups);
  const GroupLabeling groups = load_groups(a.groups, f.fp.a_mat.row_names());
  Matrix x;
  if (bc.refit) x = read_fitted_data(run, a.input, parse_orientation(a.orientation), f);
  bc.progress = run.progress("test");
  const TestReport r = group_test(x, groups, replication_config(f.fp, a), bc, f.fp);

  ensure_out_dir(g);
  const std::string t1 = r.first_tag, t2 = r.second_tag;
  std::string csv_text = csv::join({"pattern", "group_mean_" + t1, "group_mean_" + t2, "pooled_sd",
                                    "diff", "p_two_sided", "p_greater", "p_less"}) +
                         "\n";
  for (const auto& t : r.patterns)
    csv_text += csv::join({t.name, format_double(t.mean_first), format_double(t.mean_second),
                           format_double(t.pooled_sd), format_double(t.observed_diff),
                           format_double(t.p_two_sided), format_double(t.p_greater),
                           format_double(t.p_less)}) +
                "\n";
  write_text(run.output("test.csv"), csv_text);

  std::string s;
  s += format("group '%s' (n = %zu) versus group '%s' (n = %zu), B = %zu, %s mode\n", t1.c_str(),
              groups.count(t1), t2.c_str(), groups.count(t2), r.b, r.refit ? "refit" : "fast");
  s += format("%-16s %9s %9s %9s %9s   %-14s %-14s %-14s\n", "pattern", ("mean_" + t1).c_str(),
              ("mean_" + t2).c_str(), "pooled_sd", "diff", (t1 + " != " + t2).c_str(),
              (t1 + " > " + t2).c_str(), (t1 + " < " + t2).c_str());
  auto cell = [](double p) { return format("%.4f %-3s", p, significance_stars(p).c_str()); };
  for (const auto& t : r.patterns)
    s += format("%-16s %9.4f %9.4f %9.4f %9.4f   %-14s %-14s %-14s\n", t.name.c_str(),
                t.mean_first, t.mean_second, t.pooled_sd, t.observed_diff,
                cell(t.p_two_sided).c_str(), cell(t.p_greater).c_str(), cell(t.p_less).c_str());
  s += "significance: *** p < 0.01, ** p < 0.05, * p < 0.1\n";
  write_text(run.output("test_summary.txt"), s);
  run.out() << s;
  if (r.failed_attempts)
    run.err() << "warning: " << r.failed_attempts << " replication attempts were redrawn\n";
}

// ---------------------------------------------------------------- reconstruct

struct ReconstructArgs {
  std::string factors;
  std::string learner;
  std::string input;
  bool svg = false;
  std::string orientation = "learners_as_rows";
};

void cmd_reconstruct(Run& run, const ReconstructArgs& a) {
  const Global& g = run.global();
  const fs::path dir = a.factors.empty() ? g.out_dir : fs::path(a.factors);
  run.config() = {{"factors", dir.string()}, {"learner", a.learner}, {"input", a.input},
                  {"orientation", a.orientation}, {"svg", a.svg}};
  const Factors f = read_factors(run, dir);
  const std::size_t j = learner_index(f.fp, a.learner);
  const Vector modeled = reconstruct(f.fp, j);
  Vector observed;
  if (!a.input.empty()) {
    const Matrix x = read_fitted_data(run, a.input, parse_orientation(a.orientation), f);
    observed = x.col(j);
  }

  ensure_out_dir(g);
  const Names& features = f.fp.p_mat.row_names();
  const Names& labels = f.fp.p_mat.col_names();
  const std::string stem = "reconstruct_" + safe_name(a.learner);
  std::string csv_text = observed.empty() ? "feature,modeled\n" : "feature,observed,modeled\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::vector<std::string> cells{features[i]};
    if (!observed.empty()) cells.push_back(format_double(observed[i]));
    cells.push_back(format_double(modeled[i]));
    csv_text += csv::join(cells) + "\n";
  }
  write_text(run.output(stem + ".csv"), csv_text);

  const auto affinity = f.fp.a_mat.row(j);
  std::string aff_text = "pattern,affinity\n";
  for (std::size_t c = 0; c < labels.size(); ++c)
    aff_text += csv::join({labels[c], format_double(affinity[c])}) + "\n";
  write_text(run.output(stem + "_affinity.csv"), aff_text);

  if (a.svg) {
    write_text(run.output(stem + ".svg"),
               svg::reconstruction_plot("learner " + a.learner, features, observed, modeled,
                                        f.fp.p_mat, labels, affinity));
  }

  auto& o = run.out();
  o << "learner " << a.learner << "\n";
  o << format("%-16s %12s", "feature", "modeled");
  if (!observed.empty()) o << format(" %12s", "observed");
  o << "\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    o << format("%-16s %12.6f", features[i].c_str(), modeled[i]);
    if (!observed.empty()) o << format(" %12.6f", observed[i]);
    o << "\n";
  }
  o << "affinities:";
  for (std::size_t c = 0; c < labels.size(); ++c)
    o << format(" %s=%.6f", labels[c].c_str(), affinity[c]);
  o << "\n";
  if (!observed.empty()) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
      num += (observed[i] - modeled[i]) * (observed[i] - modeled[i]);
      den += observed[i] * observed[i];
    }
    o << format("relative error %.6g\n", den > 0 ? std::sqrt(num / den) : std::sqrt(num));
  }
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::size_t p = 21;
  std::size_t n = 111;
  std::size_t k = 8;
  std::size_t defining = 3;
  double zero_prob = 0.2;
  double noise_sd = 0.0;
  std::vector<double> group_shift;  // pattern (1-based), delta, fraction
  double group_fraction = 0.5;
};

void cmd_simulate(Run& run, const SimulateArgs& a) {
  const Global& g = run.global();
  run.config() = {{"p", a.p},
                  {"n", a.n},
                  {"k", a.k},
                  {"defining", a.defining},
                  {"zero_prob", a.zero_prob},
                  {"noise_sd", a.noise_sd},
                  {"group_shift", a.group_shift},
                  {"group_fraction", a.group_fraction}};
  SynthConfig sc;
  sc.p = a.p;
  sc.n = a.n;
  sc.k = a.k;
  sc.defining_per_pattern = a.defining;
  sc.zero_affinity_prob = a.zero_prob;
  sc.noise_sd = a.noise_sd;
  sc.seed = g.seed;
  if (!a.group_shift.empty()) {
    if (a.group_shift.size() != 3)
      throw ValidationError("--group-shift takes pattern,delta,fraction");
    const double pat = a.group_shift[0];
    if (!(pat >= 1.0) || pat != std::floor(pat))
      throw ValidationError("--group-shift pattern must be a positive integer (1-based)");
    sc.group_shift = GroupShift{static_cast<std::size_t>(pat) - 1, a.group_shift[1],
                                a.group_shift[2]};
  }
  validate(sc);
  const SynthData d = generate(sc);

  GroupLabeling groups;
  if (d.groups) {
    groups = *d.groups;
  } else {
    const auto nf =
        static_cast<std::size_t>(std::llround(a.group_fraction * static_cast<double>(a.n)));
    if (!(a.group_fraction > 0.0 && a.group_fraction < 1.0) || nf < 1 || nf >= a.n)
      throw ValidationError("--group-fraction must leave both groups non-empty");
    std::vector<std::size_t> order(a.n);
    for (std::size_t j = 0; j < a.n; ++j) order[j] = j;
    Rng rng(derive_seed(g.seed, 0x6c6162656c73ULL));
    rng.shuffle(std::span(order));
    std::map<std::string, std::string> labels;
    for (std::size_t r = 0; r < a.n; ++r) labels[d.x.col_names()[order[r]]] = r < nf ? "f" : "p";
    groups = GroupLabeling(std::move(labels));
  }

  ensure_out_dir(g);
  save_matrix(d.x, run.output("matrix.csv"));
  save_groups(groups, d.x.col_names(), run.output("groups.csv"));
  const Names labels = default_pattern_names(a.k);
  detail::write_labeled(run.output("p_true.csv"), "feature", labels, d.x.row_names(), d.p_true);
  detail::write_labeled(run.output("a_true.csv"), "id", labels, d.x.col_names(), d.a_true);
  run.out() << format("simulated %zu features x %zu learners with k = %zu (groups: %zu '%s', %zu '%s')\n",
                      a.p, a.n, a.k, groups.count(groups.first_tag()), groups.first_tag().c_str(),
                      groups.count(groups.second_tag()), groups.second_tag().c_str());
}

// ---------------------------------------------------------------- summary

struct SummaryArgs {
  std::string factors;
  std::string groups;
};

void cmd_summary(Run& run, const SummaryArgs& a) {
  const Global& g = run.global();
  const fs::path dir = a.factors.empty() ? g.out_dir : fs::path(a.factors);
  run.config() = {{"factors", dir.string()}, {"groups", a.groups}};
  const Factors f = read_factors(run, dir);
  AffinitySummary s;
  if (a.groups.empty()) {
    s = affinity_summary(f.fp.a_mat);
  } else {
    run.input(a.groups);
    s = group_summary(f.fp.a_mat, load_groups(a.groups, f.fp.a_mat.row_names()));
  }
  const bool grouped = !s.groups.empty();

  ensure_out_dir(g);
  std::vector<std::string> head{"pattern", "k", "q25", "mean", "q50", "q75"};
  if (grouped) {
    head.push_back("mean_" + s.first_tag);
    head.push_back("mean_" + s.second_tag);
    head.push_back("pooled_sd");
  }
  std::string csv_text = csv::join(head) + "\n";
  for (std::size_t c = 0; c < s.patterns.size(); ++c) {
    const auto& ps = s.patterns[c];
    std::vector<std::string> cells{ps.name, std::to_string(c + 1), format_double(ps.q25),
                                   format_double(ps.mean), format_double(ps.q50),
                                   format_double(ps.q75)};
    if (grouped) {
      cells.push_back(format_double(s.groups[c].mean_first));
      cells.push_back(format_double(s.groups[c].mean_second));
      cells.push_back(format_double(s.groups[c].pooled_sd));
    }
    csv_text += csv::join(cells) + "\n";
  }
  write_text(run.output("summary.csv"), csv_text);

  auto& o = run.out();
  o << format("%-16s %3s %9s %9s %9s %9s", "pattern", "k", "q25", "mean", "q50", "q75");
  if (grouped)
    o << format(" %9s %9s %9s", ("mean_" + s.first_tag).c_str(), ("mean_" + s.second_tag).c_str(),
                "pooled_sd");
  o << "\n";
  for (std::size_t c = 0; c < s.patterns.size(); ++c) {
    const auto& ps = s.patterns[c];
    o << format("%-16s %3zu %9.4f %9.4f %9.4f %9.4f", ps.name.c_str(), c + 1, ps.q25, ps.mean,
                ps.q50, ps.q75);
    if (grouped)
      o << format(" %9.4f %9.4f %9.4f", s.groups[c].mean_first, s.groups[c].mean_second,
                  s.groups[c].pooled_sd);
    o << "\n";
  }
  if (grouped)
    o << format("n(%s) = %zu, n(%s) = %zu\n", s.first_tag.c_str(), s.n_first,
                s.second_tag.c_str(), s.n_second);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learning-pattern extraction by non-negative matrix factorization", "lpnmf"};
  app.set_version_flag("--version", LPNMF_VERSION);
  app.require_subcommand(1);

  Global g;
  std::string out_dir = ".";
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", out_dir, "Directory for all outputs")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress standard output");

  const std::vector<std::string> orientations{"learners_as_rows", "features_as_rows"};
  auto orientation_opt = [&](CLI::App* sub, std::string& field) {
    sub->add_option("--orientation", field, "Layout of the matrix CSV")
        ->check(CLI::IsMember(orientations))
        ->capture_default_str();
  };

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Factorize a feature matrix");
  fit_cmd->add_option("--input", fa.input, "Feature matrix CSV")->required();
  fit_cmd->add_option("--k", fa.k, "Number of patterns")->capture_default_str();
  fit_cmd->add_option("--restarts", fa.restarts, "Random restarts")->capture_default_str();
  fit_cmd->add_option("--tol", fa.tol, "Relative objective change tolerance")->capture_default_str();
  fit_cmd->add_option("--max-iter", fa.max_iter, "Sweeps per restart")->capture_default_str();
  fit_cmd->add_option("--rescale", fa.rescale, "Affinity scaling")
      ->check(CLI::IsMember({"max", "mean", "none"}))
      ->capture_default_str();
  fit_cmd->add_flag("--no-scale", fa.no_scale, "Skip dividing feature rows by their maxima");
  fit_cmd->add_option("--labels", fa.labels, "Comma-separated pattern labels")->delimiter(',');
  fit_cmd->add_option("--schema", fa.schema, "Feature schema JSON, or 'builtin'");
  orientation_opt(fit_cmd, fa.orientation);

  BootArgs ca;
  ca.mode = "refit";
  auto* ci_cmd = app.add_subcommand("ci", "Bootstrap intervals for pattern coefficients");
  ci_cmd->add_option("--factors", ca.factors, "Factors directory (default: --out-dir)");
  ci_cmd->add_option("--input", ca.input, "Feature matrix CSV used for the fit")->required();
  ci_cmd->add_option("--b", ca.b, "Bootstrap replications")->capture_default_str();
  ci_cmd->add_option("--level", ca.level, "Confidence level")->capture_default_str();
  ci_cmd->add_option("--mode", ca.mode, "refit or fast")
      ->check(CLI::IsMember({"refit", "fast"}))
      ->capture_default_str();
  ci_cmd->add_option("--init", ca.init, "Replication start: warm or random")
      ->check(CLI::IsMember({"warm", "random"}))
      ->capture_default_str();
  ci_cmd->add_option("--boot-restarts", ca.boot_restarts,
                     "Restarts per replication with --init random (default: as fitted)");
  orientation_opt(ci_cmd, ca.orientation);

  BootArgs ta;
  ta.mode = "fast";
  auto* test_cmd = app.add_subcommand("test", "Permutation test of group mean affinities");
  test_cmd->add_option("--factors", ta.factors, "Factors directory (default: --out-dir)");
  test_cmd->add_option("--groups", ta.groups, "Groups CSV with header id,group")->required();
  test_cmd->add_option("--input", ta.input, "Feature matrix CSV (refit mode)");
  test_cmd->add_option("--b", ta.b, "Bootstrap replications")->capture_default_str();
  test_cmd->add_option("--mode", ta.mode, "fast or refit")
      ->check(CLI::IsMember({"refit", "fast"}))
      ->capture_default_str();
  test_cmd->add_option("--init", ta.init, "Replication start: warm or random")
      ->check(CLI::IsMember({"warm", "random"}))
      ->capture_default_str();
  test_cmd->add_option("--boot-restarts", ta.boot_restarts,
                       "Restarts per replication with --init random (default: as fitted)");
  orientation_opt(test_cmd, ta.orientation);

  ReconstructArgs ra;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Model approximation of one learner");
  rec_cmd->add_option("--factors", ra.factors, "Factors directory (default: --out-dir)");
  rec_cmd->add_option("--learner", ra.learner, "Learner id")->required();
  rec_cmd->add_option("--input", ra.input, "Feature matrix CSV, for observed values");
  rec_cmd->add_flag("--svg", ra.svg, "Also write a plot");
  orientation_opt(rec_cmd, ra.orientation);

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate synthetic data with known factors");
  sim_cmd->add_option("--p", sa.p, "Features")->capture_default_str();
  sim_cmd->add_option("--n", sa.n, "Learners")->capture_default_str();
  sim_cmd->add_option("--k", sa.k, "Patterns")->capture_default_str();
  sim_cmd->add_option("--defining", sa.defining, "High-loading features per pattern")
      ->capture_default_str();
  sim_cmd->add_option("--zero-prob", sa.zero_prob, "Probability of a zero affinity")
      ->capture_default_str();
  sim_cmd->add_option("--noise-sd", sa.noise_sd, "Noise standard deviation")->capture_default_str();
  sim_cmd->add_option("--group-shift", sa.group_shift,
                      "Planted effect: pattern (1-based),delta,fraction")
      ->delimiter(',')
      ->expected(3);
  sim_cmd->add_option("--group-fraction", sa.group_fraction,
                      "Share of 'f' learners when no shift is planted")
      ->capture_default_str();

  SummaryArgs ma;
  auto* sum_cmd = app.add_subcommand("summary", "Quartiles and means of affinities");
  sum_cmd->add_option("--factors", ma.factors, "Factors directory (default: --out-dir)");
  sum_cmd->add_option("--groups", ma.groups, "Groups CSV for per-group columns");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> argv_store{"lpnmf"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : validation_failure;
  }
  g.out_dir = out_dir;

  CLI::App* chosen = app.get_subcommands().front();
  Run run(chosen->get_name(), g, args, out, err);
  int code = ok;
  std::string message;
  try {
    if (chosen == fit_cmd) cmd_fit(run, fa);
    else if (chosen == ci_cmd) cmd_ci(run, ca);
    else if (chosen == test_cmd) cmd_test(run, ta);
    else if (chosen == rec_cmd) cmd_reconstruct(run, ra);
    else if (chosen == sim_cmd) cmd_simulate(run, sa);
    else cmd_summary(run, ma);
  } catch (const NumericalError& e) {
    code = numerical_failure;
    message = e.what();
  } catch (const Error& e) {
    code = validation_failure;
    message = e.what();
  } catch (const std::exception& e) {
    code = numerical_failure;
    message = e.what();
  }
  if (code != ok) err << "error: " << message << "\n";
  run.write_manifest(code, message);
  return code;
}

}  // namespace lpnmf::cli
