#include "telscope/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

namespace {

namespace fs = std::filesystem;

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  writer(out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Rows keyed by timestamp; series may start at different points of the same grid.
void write_aligned_csv(std::ostream& out, const std::vector<std::string>& header,
                       const std::vector<const TimeSeries*>& columns) {
  std::map<std::int64_t, std::vector<double>> rows;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == nullptr) continue;
    const TimeSeries& s = *columns[c];
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto [it, inserted] = rows.try_emplace(s.time_at(i).seconds, columns.size(), kMissing);
      it->second[c] = s[i];
    }
  }
  for (std::size_t h = 0; h < header.size(); ++h) out << (h ? "," : "") << header[h];
  out << '\n';
  for (const auto& [t, values] : rows) {
    out << format_iso8601(Timestamp{t});
    for (double v : values) out << ',' << format_real(v);
    out << '\n';
  }
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_spans_json(std::ostream& out, std::span<const SpanReport> spans) {
  auto doc = nlohmann::ordered_json::array();
  for (const auto& s : spans) {
    nlohmann::ordered_json j;
    j["rank"] = s.span.rank;
    j["start"] = format_iso8601(s.span.start);
    j["end"] = format_iso8601(s.span.end);
    j["mean_score"] = s.span.mean_score;
    auto top = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(3, s.importance.size()); ++i) top.push_back(s.importance[i].feature);
    j["top_features"] = std::move(top);
    doc.push_back(std::move(j));
  }
  out << doc.dump(2) << '\n';
}

void write_correlations_csv(std::ostream& out, const CorrelationMatrix& corr) {
  out << "channel";
  for (const auto& n : corr.names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < corr.names.size(); ++i) {
    out << corr.names[i];
    for (std::size_t j = 0; j < corr.names.size(); ++j) out << ',' << format_real(corr.at(i, j));
    out << '\n';
  }
}

namespace svg {

namespace {

constexpr double kWidth = 960, kHeight = 360;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

std::string diverging(double v, double scale) {
  const double t = scale > 0.0 ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
  // white at zero, red positive, blue negative
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
  char buf[16];
  if (t >= 0.0) {
    std::snprintf(buf, sizeof buf, "#ff%02x%02x", fade, fade);
  } else {
    std::snprintf(buf, sizeof buf, "#%02x%02xff", fade, fade);
  }
  return buf;
}

}  // namespace

std::string line_plot(const std::string& title, const std::vector<Line>& lines, const std::vector<Band>& bands) {
  double t0 = 0, t1 = 1, lo = 0, hi = 1;
  bool any = false;
  for (const auto& l : lines) {
    if (l.series == nullptr) continue;
    for (std::size_t i = 0; i < l.series->size(); ++i) {
      const double v = (*l.series)[i];
      if (!std::isfinite(v)) continue;
      const double t = static_cast<double>(l.series->time_at(i).seconds);
      if (!any) {
        t0 = t1 = t;
        lo = hi = v;
        any = true;
      }
      t0 = std::min(t0, t);
      t1 = std::max(t1, t);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (t1 <= t0) t1 = t0 + 1;
  if (hi <= lo) {
    hi = lo + 0.5;
    lo -= 0.5;
  }
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto x_of = [&](double t) { return kLeft + (t - t0) / (t1 - t0) * pw; };
  auto y_of = [&](double v) { return kTop + (hi - v) / (hi - lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"15\">" << escape_xml(title) << "</text>\n";
  for (const auto& b : bands) {
    const double xa = std::clamp(x_of(static_cast<double>(b.start.seconds)), kLeft, kLeft + pw);
    const double xb = std::clamp(x_of(static_cast<double>(b.end.seconds)), kLeft, kLeft + pw);
    o << "<rect x=\"" << fixed(xa) << "\" y=\"" << kTop << "\" width=\"" << fixed(xb - xa) << "\" height=\"" << ph
      << "\" fill=\"#fdd835\" fill-opacity=\"0.3\"/>\n";
    o << "<text x=\"" << fixed(xa + 3) << "\" y=\"" << kTop + 14 << "\">" << escape_xml(b.label) << "</text>\n";
  }
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double t = t0 + (t1 - t0) * k / 4.0;
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << fixed(y_of(v) + 4) << "\" text-anchor=\"end\">" << fixed(v)
      << "</text>\n";
    o << "<text x=\"" << fixed(x_of(t)) << "\" y=\"" << kHeight - kBottom + 18 << "\" text-anchor=\"middle\">"
      << format_iso8601(Timestamp{static_cast<std::int64_t>(t)}).substr(0, 10) << "</text>\n";
  }
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto& l = lines[li];
    const char* colour = kPalette[li % std::size(kPalette)];
    if (l.series != nullptr) {
      o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1\" points=\"";
      for (std::size_t i = 0; i < l.series->size(); ++i) {
        const double v = (*l.series)[i];
        if (!std::isfinite(v)) continue;
        o << fixed(x_of(static_cast<double>(l.series->time_at(i).seconds))) << ',' << fixed(y_of(v)) << ' ';
      }
      o << "\"/>\n";
    }
    const double ly = kHeight - 12;
    const double lx = kLeft + 160.0 * static_cast<double>(li);
    o << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"3\" fill=\"" << colour << "\"/>\n";
    o << "<text x=\"" << lx + 16 << "\" y=\"" << ly << "\">" << escape_xml(l.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap(const std::string& title, const AttributionMatrix& attr, std::size_t max_features) {
  const FeatureImportance imp = importance_summary(attr);
  const std::size_t nf = std::min(max_features, imp.size());
  double scale = 0.0;
  for (double v : attr.values) scale = std::max(scale, std::abs(v));

  const double label_w = 140, cell_h = 16;
  const double pw = kWidth - label_w - kRight;
  const double cell_w = attr.rows() == 0 ? pw : pw / static_cast<double>(attr.rows());
  const double height = kTop + cell_h * static_cast<double>(nf) + kBottom;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << fixed(height)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << label_w << "\" y=\"24\" font-size=\"15\">" << escape_xml(title) << "</text>\n";
  for (std::size_t f = 0; f < nf; ++f) {
    const std::size_t col = imp[f].index;
    const double y = kTop + cell_h * static_cast<double>(f);
    o << "<text x=\"" << label_w - 6 << "\" y=\"" << fixed(y + cell_h - 4) << "\" text-anchor=\"end\">"
      << escape_xml(attr.feature_names[col]) << "</text>\n";
    for (std::size_t r = 0; r < attr.rows(); ++r) {
      o << "<rect x=\"" << fixed(label_w + cell_w * static_cast<double>(r)) << "\" y=\"" << fixed(y) << "\" width=\""
        << fixed(cell_w + 0.05) << "\" height=\"" << cell_h << "\" fill=\"" << diverging(attr.row(r)[col], scale)
        << "\"/>\n";
    }
  }
  if (attr.rows() > 0) {
    const double y = kTop + cell_h * static_cast<double>(nf) + 16;
    o << "<text x=\"" << label_w << "\" y=\"" << fixed(y) << "\">" << format_iso8601(attr.row_timestamps.front())
      << "</text>\n";
    o << "<text x=\"" << kWidth - kRight << "\" y=\"" << fixed(y) << "\" text-anchor=\"end\">"
      << format_iso8601(attr.row_timestamps.back()) << "</text>\n";
    o << "<text x=\"" << label_w << "\" y=\"" << fixed(y + 16) << "\">|φ| scale " << fixed(scale)
      << " (red positive, blue negative)</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace svg

void emit_report(const ParameterReport& report, const std::filesystem::path& out_dir) {
  const fs::path dir = out_dir / report.parameter;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  write_file(dir / "predictions.csv", [&](std::ostream& o) {
    write_aligned_csv(o, {"timestamp", "actual", "predicted"}, {&report.actual, &report.predicted});
  });
  write_file(dir / "residuals.csv", [&](std::ostream& o) {
    write_aligned_csv(o, {"timestamp", "residual", "predicted_residual"},
                      {&report.residual, report.predicted_residual ? &*report.predicted_residual : nullptr});
  });
  write_file(dir / "anomaly_scores.csv", [&](std::ostream& o) {
    write_aligned_csv(o, {"timestamp", "score", "predicted_score"},
                      {&report.anomaly_score, report.predicted_anomaly_score ? &*report.predicted_anomaly_score : nullptr});
  });
  write_file(dir / "spans.json", [&](std::ostream& o) { write_spans_json(o, report.spans); });
  write_file(dir / "importance.json", [&](std::ostream& o) { write_importance_json(o, report.importance); });
  write_file(dir / "correlations.csv", [&](std::ostream& o) { write_correlations_csv(o, report.correlations); });

  std::vector<svg::Band> bands;
  for (const auto& s : report.spans) {
    bands.push_back(svg::Band{s.span.start, s.span.end, "#" + std::to_string(s.span.rank)});
    const std::string stem = "shap_span_" + std::to_string(s.span.rank);
    write_file(dir / (stem + ".csv"), [&](std::ostream& o) { write_attribution_csv(o, s.attribution); });
    write_file(dir / (stem + ".svg"), [&](std::ostream& o) {
      o << svg::heatmap(report.parameter + " attribution, span #" + std::to_string(s.span.rank), s.attribution);
    });
  }
  write_file(dir / "predictions.svg", [&](std::ostream& o) {
    o << svg::line_plot(report.parameter + ": actual vs predicted",
                        {{"actual", &report.actual}, {"predicted", &report.predicted}}, bands);
  });
  write_file(dir / "anomaly_scores.svg", [&](std::ostream& o) {
    o << svg::line_plot(report.parameter + ": anomaly score",
                        {{"score", &report.anomaly_score},
                         {"predicted score", report.predicted_anomaly_score ? &*report.predicted_anomaly_score : nullptr}},
                        bands);
  });

  write_file(dir / "model1.json", [&](std::ostream& o) { save_model(o, report.model1); });
  write_file(dir / "model2.json", [&](std::ostream& o) { save_model(o, report.model2); });
  write_file(dir / "scorer.json", [&](std::ostream& o) { save_scorer(o, report.scorer); });
  write_file(dir / "model2_rows.csv", [&](std::ostream& o) { write_feature_csv(o, report.model2_rows); });
}

}  // namespace telscope
