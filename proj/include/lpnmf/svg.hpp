#pragma once

// Minimal SVG figures: per-pattern coefficient intervals and per-learner
// reconstructions. Elements carry class names so tests can count them.

#include <algorithm>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "lpnmf/error.hpp"
#include "lpnmf/matrix.hpp"

namespace lpnmf::svg {

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

namespace detail {

constexpr double label_w = 150, plot_w = 420, row_h = 18, top = 40, margin = 20;

inline std::string header(double w, double h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n" +
         "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" fill=\"white\"/>\n" + "<text class=\"title\" x=\"" + num(margin) +
         "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" + escape(title) + "</text>\n";
}

inline std::string axis(double x0, double y0, double y1, double scale, double vmax) {
  std::string s = "<line class=\"axis\" x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" +
                  num(x0) + "\" y2=\"" + num(y1) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = vmax * t / 4.0, x = x0 + v * scale;
    s += "<text class=\"tick\" x=\"" + num(x) + "\" y=\"" + num(y1 + 14) +
         "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" + num(v) +
         "</text>\n";
  }
  return s;
}

inline std::string feature_label(double y, const std::string& name) {
  return "<text class=\"feature\" x=\"" + num(label_w + margin - 6) + "\" y=\"" + num(y + 12) +
         "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + escape(name) +
         "</text>\n";
}

}  // namespace detail

// One horizontal bar per feature at its bootstrap mean, a circle at the mean,
// and a whisker from lower to upper. Features whose interval excludes zero
// are drawn highlighted.
inline std::string interval_plot(const std::string& title, const Names& features,
                                 const Vector& mean, const Vector& lower, const Vector& upper) {
  const std::size_t p = features.size();
  if (mean.size() != p || lower.size() != p || upper.size() != p)
    throw ValidationError("interval plot needs one mean, lower and upper per feature");
  using namespace detail;
  double vmax = 0.0;
  for (std::size_t i = 0; i < p; ++i) vmax = std::max({vmax, upper[i], mean[i]});
  if (!(vmax > 0.0)) vmax = 1.0;
  const double scale = plot_w / vmax, x0 = margin + label_w;
  const double h = top + row_h * static_cast<double>(p) + 40;
  std::string s = header(x0 + plot_w + margin, h, title);
  for (std::size_t i = 0; i < p; ++i) {
    const double y = top + row_h * static_cast<double>(i);
    const bool defining = lower[i] > 0.0;
    const std::string cls = defining ? "bar defining" : "bar";
    const std::string fill = defining ? "#d95f02" : "#bbbbbb";
    s += feature_label(y, features[i]);
    s += "<rect class=\"" + cls + "\" x=\"" + num(x0) + "\" y=\"" + num(y + 3) + "\" width=\"" +
         num(mean[i] * scale) + "\" height=\"" + num(row_h - 6) + "\" fill=\"" + fill + "\"/>\n";
    const double cy = y + row_h / 2;
    s += "<line class=\"interval\" x1=\"" + num(x0 + lower[i] * scale) + "\" y1=\"" + num(cy) +
         "\" x2=\"" + num(x0 + upper[i] * scale) + "\" y2=\"" + num(cy) +
         "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    s += "<circle class=\"mean\" cx=\"" + num(x0 + mean[i] * scale) + "\" cy=\"" + num(cy) +
         "\" r=\"3\" fill=\"black\"/>\n";
  }
  s += axis(x0, top, top + row_h * static_cast<double>(p), scale, vmax);
  return s + "</svg>\n";
}

// Top panel: observed (when given) and modeled value per feature. Below it one panel per
// pattern with non-zero affinity, showing affinity times the pattern column.
inline std::string reconstruction_plot(const std::string& title, const Names& features,
                                       const Vector& observed, const Vector& modeled,
                                       const Matrix& patterns, const Names& pattern_names,
                                       std::span<const double> affinity) {
  const std::size_t p = features.size(), k = patterns.cols();
  const bool has_observed = !observed.empty();
  if ((has_observed && observed.size() != p) || modeled.size() != p || patterns.rows() != p ||
      affinity.size() != k || pattern_names.size() != k)
    throw ValidationError("reconstruction plot inputs disagree in shape");
  using namespace detail;
  std::vector<std::size_t> shown;
  for (std::size_t c = 0; c < k; ++c)
    if (affinity[c] > 0.0) shown.push_back(c);

  double vmax = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    vmax = std::max({vmax, has_observed ? observed[i] : 0.0, modeled[i]});
    for (auto c : shown) vmax = std::max(vmax, affinity[c] * patterns(i, c));
  }
  if (!(vmax > 0.0)) vmax = 1.0;
  const double scale = plot_w / vmax, x0 = margin + label_w;
  const double panel_h = row_h * static_cast<double>(p) + 40;
  const double h = top + panel_h * static_cast<double>(1 + shown.size()) + 10;
  std::string s = header(x0 + plot_w + margin, h, title);

  auto panel = [&](double y0, const std::string& caption) {
    s += "<text class=\"panel\" x=\"" + num(x0) + "\" y=\"" + num(y0 - 4) +
         "\" font-family=\"sans-serif\" font-size=\"12\">" + escape(caption) + "</text>\n";
  };
  panel(top, has_observed ? "observed (grey) and modeled (blue)" : "modeled (blue)");
  for (std::size_t i = 0; i < p; ++i) {
    const double y = top + row_h * static_cast<double>(i);
    s += feature_label(y, features[i]);
    if (has_observed)
      s += "<rect class=\"observed\" x=\"" + num(x0) + "\" y=\"" + num(y + 2) + "\" width=\"" +
           num(observed[i] * scale) + "\" height=\"" + num(row_h / 2 - 2) +
           "\" fill=\"#999999\"/>\n";
    s += "<rect class=\"modeled\" x=\"" + num(x0) + "\" y=\"" + num(y + row_h / 2) +
         "\" width=\"" + num(modeled[i] * scale) + "\" height=\"" + num(row_h / 2 - 2) +
         "\" fill=\"#1f78b4\"/>\n";
  }
  s += axis(x0, top, top + row_h * static_cast<double>(p), scale, vmax);

  for (std::size_t n = 0; n < shown.size(); ++n) {
    const std::size_t c = shown[n];
    const double y0 = top + panel_h * static_cast<double>(n + 1);
    panel(y0, pattern_names[c] + " x " + num(affinity[c]));
    for (std::size_t i = 0; i < p; ++i) {
      const double y = y0 + row_h * static_cast<double>(i);
      s += feature_label(y, features[i]);
      s += "<rect class=\"pattern\" x=\"" + num(x0) + "\" y=\"" + num(y + 3) + "\" width=\"" +
           num(affinity[c] * patterns(i, c) * scale) + "\" height=\"" + num(row_h - 6) +
           "\" fill=\"#33a02c\"/>\n";
    }
    s += axis(x0, y0, y0 + row_h * static_cast<double>(p), scale, vmax);
  }
  return s + "</svg>\n";
}

}  // namespace lpnmf::svg
