#pragma once

// CSV and JSON serialization: feature matrices, group labels, row scaling,
// fitted factor directories and custom feature schemas.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "lpnmf/error.hpp"
#include "lpnmf/groups.hpp"
#include "lpnmf/matrix.hpp"
#include "lpnmf/nmf.hpp"
#include "lpnmf/schema.hpp"

namespace lpnmf {

inline constexpr int factors_schema_version = 1;

enum class Orientation { learners_as_rows, features_as_rows };

inline Orientation parse_orientation(std::string_view s) {
  if (s == "learners_as_rows" || s == "learners") return Orientation::learners_as_rows;
  if (s == "features_as_rows" || s == "features") return Orientation::features_as_rows;
  throw ValidationError("unknown orientation '" + std::string(s) +
                        "' (expected learners_as_rows or features_as_rows)");
}

struct ScalingRecord {
  Vector row_maxima;
};

// 17 significant digits: enough to reproduce every double exactly.
inline std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace csv {

struct Row {
  std::size_t line = 0;  // 1-based line of the record start
  std::vector<std::string> cells;
};

inline std::vector<Row> parse(std::string_view text, const std::string& source) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<Row> rows;
  Row cur;
  std::string cell;
  bool quoted = false, cell_started = false;
  std::size_t line = 1;
  cur.line = 1;
  auto end_record = [&] {
    cur.cells.push_back(std::move(cell));
    cell.clear();
    cell_started = false;
    const bool blank = cur.cells.size() == 1 && cur.cells[0].empty();
    if (!blank) rows.push_back(std::move(cur));
    cur = Row{};
    cur.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        cell += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (cell_started) {
          throw ValidationError(source + " line " + std::to_string(line) +
                                ": stray quote inside an unquoted cell");
        }
        quoted = cell_started = true;
        break;
      case ',':
        cur.cells.push_back(std::move(cell));
        cell.clear();
        cell_started = false;
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        cell += ch;
        cell_started = true;
    }
  }
  if (quoted) throw ValidationError(source + ": unterminated quoted cell");
  if (cell_started || !cell.empty() || !cur.cells.empty()) end_record();
  return rows;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += quote(cells[i]);
  }
  return out;
}

}  // namespace csv

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error("failed writing " + path.string());
}

namespace detail {

inline std::vector<csv::Row> read_table(const std::filesystem::path& path) {
  auto rows = csv::parse(read_text(path), path.string());
  if (rows.empty()) throw ValidationError(path.string() + " is empty");
  const std::size_t width = rows[0].cells.size();
  for (const auto& r : rows) {
    if (r.cells.size() != width) {
      throw ValidationError(path.string() + " line " + std::to_string(r.line) + ": expected " +
                            std::to_string(width) + " cells, found " +
                            std::to_string(r.cells.size()));
    }
  }
  return rows;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_cell(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  if (s.empty()) throw ValidationError(where + ": missing value");
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec == std::errc::result_out_of_range)
    throw ValidationError(where + ": value '" + s + "' is out of range");
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ValidationError(where + ": '" + s + "' is not a number");
  return v;
}

inline void check_unique(const Names& names, const std::string& what,
                         const std::string& source) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw ValidationError(source + ": empty " + what);
    if (!seen.insert(n).second)
      throw ValidationError(source + ": duplicate " + what + " '" + n + "'");
  }
}

// Numeric body of a CSV with one header row and one label column.
struct LabeledTable {
  Names header;  // excluding the label column
  Names labels;  // first cell of each body row
  Matrix values;  // body rows x header columns
};

inline LabeledTable read_labeled(const std::filesystem::path& path,
                                 const std::string& label_what,
                                 const std::string& column_what,
                                 bool allow_negative) {
  const auto rows = read_table(path);
  const std::string src = path.string();
  if (rows[0].cells.size() < 2)
    throw ValidationError(src + ": header needs an id column and at least one value column");
  LabeledTable t;
  for (std::size_t c = 1; c < rows[0].cells.size(); ++c)
    t.header.push_back(trim(rows[0].cells[c]));
  check_unique(t.header, column_what, src);
  if (rows.size() < 2) throw ValidationError(src + ": no data rows");
  t.values = Matrix(rows.size() - 1, t.header.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    t.labels.push_back(trim(cells[0]));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string where = src + " line " + std::to_string(rows[r].line) + ", column '" +
                                t.header[c - 1] + "'";
      const double v = parse_cell(cells[c], where);
      if (v < 0.0 && !allow_negative)
        throw ValidationError(where + ": negative value " + trim(cells[c]));
      t.values(r - 1, c - 1) = v;
    }
  }
  check_unique(t.labels, label_what, src);
  return t;
}

inline void write_labeled(const std::filesystem::path& path, const std::string& corner,
                          const Names& header, const Names& labels, const Matrix& values) {
  std::string out = csv::join([&] {
    std::vector<std::string> h{corner};
    h.insert(h.end(), header.begin(), header.end());
    return h;
  }()) + "\n";
  for (std::size_t r = 0; r < values.rows(); ++r) {
    std::vector<std::string> cells{labels[r]};
    for (double v : values.row(r)) cells.push_back(format_double(v));
    out += csv::join(cells) + "\n";
  }
  write_text(path, out);
}

inline Names numbered(const std::string& prefix, std::size_t n) {
  Names out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace detail

// Reads a feature matrix and returns it as features x learners. With
// learners_as_rows the header is `id,<feature...>` and each row is a learner;
// with features_as_rows the header is `id,<learner...>` and each row a feature.
// All-zero learners load with a warning appended to `warnings`.
inline Matrix load_matrix(const std::filesystem::path& path,
                          Orientation orientation = Orientation::learners_as_rows,
                          std::vector<std::string>* warnings = nullptr) {
  const bool by_learner = orientation == Orientation::learners_as_rows;
  auto t = detail::read_labeled(path, by_learner ? "learner id" : "feature name",
                                by_learner ? "feature name" : "learner id", false);
  Matrix x = by_learner ? transpose(t.values) : std::move(t.values);
  x.set_row_names(by_learner ? t.header : t.labels);
  x.set_col_names(by_learner ? t.labels : t.header);
  if (warnings) {
    for (auto j : zero_columns(x))
      warnings->push_back("learner '" + x.col_names()[j] + "' has all-zero features");
  }
  return x;
}

// Writes x (features x learners) at 17 significant digits. Missing names are
// filled with f1.. for features and L1.. for learners.
inline void save_matrix(const Matrix& x, const std::filesystem::path& path,
                        Orientation orientation = Orientation::learners_as_rows) {
  const Names features = x.has_row_names() ? x.row_names() : detail::numbered("f", x.rows());
  const Names learners = x.has_col_names() ? x.col_names() : detail::numbered("L", x.cols());
  if (orientation == Orientation::learners_as_rows)
    detail::write_labeled(path, "id", features, learners, transpose(x));
  else
    detail::write_labeled(path, "id", learners, features, x);
}

// Divides every row by its maximum, bringing values onto [0, 1].
inline std::pair<Matrix, ScalingRecord> scale_rows(const Matrix& x) {
  ScalingRecord rec;
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double m = 0.0;
    for (double v : x.row(i)) {
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("cannot scale row " + std::to_string(i) +
                              ": entries must be finite and non-negative");
      }
      m = std::max(m, v);
    }
    if (!(m > 0.0)) {
      const std::string name =
          x.has_row_names() ? "'" + x.row_names()[i] + "'" : std::to_string(i);
      throw ValidationError("feature " + name +
                            " is zero for every learner; scaling is undefined, drop the feature");
    }
    rec.row_maxima.push_back(m);
    for (double& v : out.row(i)) v /= m;
  }
  return {std::move(out), std::move(rec)};
}

inline Matrix unscale_rows(const Matrix& x, const ScalingRecord& rec) {
  if (rec.row_maxima.size() != x.rows())
    throw ValidationError("scaling record has " + std::to_string(rec.row_maxima.size()) +
                          " maxima for " + std::to_string(x.rows()) + " rows");
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (double& v : out.row(i)) v *= rec.row_maxima[i];
  return out;
}

// Reads an `id,group` file and checks it labels exactly `learner_ids`.
inline GroupLabeling load_groups(const std::filesystem::path& path, const Names& learner_ids) {
  const auto rows = detail::read_table(path);
  const std::string src = path.string();
  if (rows[0].cells.size() != 2)
    throw ValidationError(src + ": expected header 'id,group'");
  std::map<std::string, std::string> labels;
  const std::set<std::string> known(learner_ids.begin(), learner_ids.end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string id = detail::trim(rows[r].cells[0]);
    const std::string tag = detail::trim(rows[r].cells[1]);
    const std::string where = src + " line " + std::to_string(rows[r].line);
    if (id.empty()) throw ValidationError(where + ": empty learner id");
    if (!known.count(id)) throw ValidationError(where + ": unknown learner '" + id + "'");
    if (!labels.emplace(id, tag).second)
      throw ValidationError(where + ": learner '" + id + "' is labeled twice");
  }
  for (const auto& id : learner_ids)
    if (!labels.count(id)) throw ValidationError(src + ": learner '" + id + "' has no group label");
  try {
    return GroupLabeling(std::move(labels));
  } catch (const ValidationError& e) {
    throw ValidationError(src + ": " + e.what());
  }
}

// Writes the labeling for `ids` in the given order.
inline void save_groups(const GroupLabeling& groups, const Names& ids,
                        const std::filesystem::path& path) {
  std::string out = "id,group\n";
  for (const auto& id : ids) out += csv::join({id, groups.tag_of(id)}) + "\n";
  write_text(path, out);
}

// Reads {"features": [{"name", "description", "addressed_styles"}]} or a
// bare array of such objects.
inline FeatureSchema load_schema(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  const nlohmann::json& list = j.is_object() && j.contains("features") ? j.at("features") : j;
  if (!list.is_array()) throw ValidationError(path.string() + ": expected a list of features");
  std::vector<FeatureInfo> features;
  try {
    for (const auto& f : list) {
      FeatureInfo info;
      info.name = f.at("name").get<std::string>();
      info.description = f.value("description", "");
      info.addressed_styles = f.value("addressed_styles", std::vector<std::string>{});
      features.push_back(std::move(info));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return FeatureSchema(std::move(features));
}

// Extra fields carried next to the factors.
struct FactorsMeta {
  int schema_version = factors_schema_version;
  Names labels;
  std::optional<ScalingRecord> scaling;
};

namespace detail {

inline Names checked_labels(const Names& labels, std::size_t k) {
  if (labels.empty()) return default_pattern_names(k);
  if (labels.size() != k)
    throw ValidationError(std::to_string(labels.size()) + " pattern labels given for K = " +
                          std::to_string(k));
  check_unique(labels, "pattern label", "labels");
  return labels;
}

}  // namespace detail

// Writes patterns.csv, affinities.csv and meta.json into `dir`.
inline void save_factors(const FactorPair& fp, const std::filesystem::path& dir,
                         const Names& labels = {},
                         const std::optional<ScalingRecord>& scaling = std::nullopt) {
  const std::size_t k = fp.p_mat.cols();
  const Names header = detail::checked_labels(
      labels.empty() && fp.p_mat.has_col_names() ? fp.p_mat.col_names() : labels, k);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  const Names features =
      fp.p_mat.has_row_names() ? fp.p_mat.row_names() : detail::numbered("f", fp.p_mat.rows());
  const Names learners =
      fp.a_mat.has_row_names() ? fp.a_mat.row_names() : detail::numbered("L", fp.a_mat.rows());
  detail::write_labeled(dir / "patterns.csv", "feature", header, features, fp.p_mat);
  detail::write_labeled(dir / "affinities.csv", "id", header, learners, fp.a_mat);

  nlohmann::ordered_json m;
  m["schema_version"] = factors_schema_version;
  m["k"] = k;
  m["seed"] = fp.config.seed;
  m["tol"] = fp.config.tol;
  m["max_iter"] = fp.config.max_iter;
  m["restarts"] = fp.config.restarts;
  m["rescale_mode"] = std::string(to_string(fp.config.rescale_mode));
  m["objective"] = fp.objective;
  m["objective_trace"] = fp.objective_trace;
  m["converged"] = fp.converged;
  m["iterations"] = fp.iterations;
  m["restarts_used"] = fp.restarts_used;
  m["best_restart"] = fp.best_restart;
  m["dead_patterns"] = fp.dead_patterns;
  m["labels"] = header;
  if (scaling) m["scaling"] = {{"row_maxima", scaling->row_maxima}};
  write_text(dir / "meta.json", m.dump(2) + "\n");
}

inline FactorPair load_factors(const std::filesystem::path& dir, FactorsMeta* meta_out = nullptr) {
  const auto meta_path = dir / "meta.json";
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text(meta_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(meta_path.string() + ": " + e.what());
  }
  FactorPair fp;
  FactorsMeta meta;
  try {
    meta.schema_version = m.at("schema_version").get<int>();
    if (meta.schema_version != factors_schema_version) {
      throw ValidationError(meta_path.string() + ": schema version " +
                            std::to_string(meta.schema_version) + " is not supported (expected " +
                            std::to_string(factors_schema_version) + ")");
    }
    fp.k = m.at("k").get<std::size_t>();
    fp.config.k = fp.k;
    fp.config.seed = m.at("seed").get<std::uint64_t>();
    fp.config.tol = m.at("tol").get<double>();
    fp.config.max_iter = m.at("max_iter").get<std::size_t>();
    fp.config.restarts = m.at("restarts").get<std::size_t>();
    fp.config.rescale_mode = parse_rescale_mode(m.value("rescale_mode", "max"));
    fp.seed = fp.config.seed;
    fp.objective = m.at("objective").get<double>();
    fp.objective_trace = m.at("objective_trace").get<std::vector<double>>();
    fp.converged = m.at("converged").get<bool>();
    fp.iterations = m.value("iterations", fp.objective_trace.size());
    fp.restarts_used = m.value("restarts_used", fp.config.restarts);
    fp.best_restart = m.value("best_restart", std::size_t{0});
    meta.labels = m.value("labels", Names{});
    if (m.contains("scaling"))
      meta.scaling = ScalingRecord{m.at("scaling").at("row_maxima").get<Vector>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(meta_path.string() + ": " + e.what());
  }

  auto p = detail::read_labeled(dir / "patterns.csv", "feature name", "pattern label", false);
  auto a = detail::read_labeled(dir / "affinities.csv", "learner id", "pattern label", false);
  if (p.header.size() != fp.k || a.header.size() != fp.k)
    throw ValidationError(dir.string() + ": factor files disagree with k = " +
                          std::to_string(fp.k) + " in meta.json");
  if (p.header != a.header)
    throw ValidationError(dir.string() + ": patterns.csv and affinities.csv use different labels");
  if (!meta.labels.empty() && meta.labels != p.header)
    throw ValidationError(dir.string() + ": meta.json labels do not match the factor files");
  if (meta.scaling && meta.scaling->row_maxima.size() != p.labels.size())
    throw ValidationError(meta_path.string() + ": scaling covers " +
                          std::to_string(meta.scaling->row_maxima.size()) + " features, found " +
                          std::to_string(p.labels.size()));
  meta.labels = p.header;
  fp.p_mat = std::move(p.values);
  fp.p_mat.set_row_names(p.labels);
  fp.p_mat.set_col_names(p.header);
  fp.a_mat = std::move(a.values);
  fp.a_mat.set_row_names(a.labels);
  fp.a_mat.set_col_names(a.header);
  fp.dead_patterns = zero_columns(fp.a_mat);
  if (meta_out) *meta_out = std::move(meta);
  return fp;
}

// Index of the learner with the given id in the affinity matrix.
inline std::size_t learner_index(const FactorPair& fp, const std::string& id) {
  const auto& ids = fp.a_mat.row_names();
  for (std::size_t j = 0; j < ids.size(); ++j)
    if (ids[j] == id) return j;
  throw ValidationError("unknown learner '" + id + "'");
}

}  // namespace lpnmf
