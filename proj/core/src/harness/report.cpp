#include "augsynth/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "augsynth/error.hpp"
#include "augsynth/image_io.hpp"

namespace augsynth::harness {

using nlohmann::json;

namespace {

std::string pct(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

std::string num(double v, const char* f = "%.3f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json opt(std::optional<double> v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json to_json(const CategoryAccuracy& a) {
  return {{"overall", a.overall}, {"many", opt(a.many)},     {"medium", opt(a.medium)}, {"few", opt(a.few)},
          {"n_many", a.n_many},   {"n_medium", a.n_medium}, {"n_few", a.n_few}};
}

CategoryAccuracy accuracy_from_json(const json& j) {
  CategoryAccuracy a;
  a.overall = j.at("overall").get<double>();
  a.many = opt_from(j.at("many"));
  a.medium = opt_from(j.at("medium"));
  a.few = opt_from(j.at("few"));
  a.n_many = j.at("n_many").get<std::int64_t>();
  a.n_medium = j.at("n_medium").get<std::int64_t>();
  a.n_few = j.at("n_few").get<std::int64_t>();
  return a;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

// Minimal line chart: series of (x, y, optional band half-width).
struct Series {
  std::string name;
  std::vector<double> x, y, band;
};

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string svg_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series, bool log2x) {
  const double W = 640, H = 400, L = 70, R = 170, T = 40, B = 55;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  auto tx = [&](double x) { return log2x ? std::log2(x) : x; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double b = s.band.empty() ? 0.0 : s.band[i];
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, s.y[i] - b);
      y1 = std::max(y1, s.y[i] + b);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << num(y, "%.3g") << "</text>\n";
  }
  std::vector<double> ticks;
  for (const auto& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks)
    o << "<text x=\"" << px(t) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << num(t, "%g")
      << "</text>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << esc(xlabel)
    << "</text>\n";
  o << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << esc(ylabel) << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* c = kColors[si % 6];
    if (!s.band.empty()) {
      o << "<polygon fill=\"" << c << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << "," << py(s.y[i] + s.band[i]) << " ";
      for (std::size_t i = s.x.size(); i-- > 0;) o << px(s.x[i]) << "," << py(s.y[i] - s.band[i]) << " ";
      o << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << "," << py(s.y[i]) << " ";
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(si);
    o << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly - 8 << "\" width=\"12\" height=\"4\" fill=\"" << c << "\"/>\n";
    o << "<text x=\"" << W - R + 30 << "\" y=\"" << ly - 2 << "\">" << esc(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

MethodRow summarize_method(std::vector<LongTailRun> runs) {
  if (runs.empty()) throw ParameterError("no runs to summarize");
  MethodRow row;
  row.method = runs.front().method;
  row.cfg_scale = runs.front().cfg_scale;
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  row.mean = mean_accuracy(runs);
  for (const auto& r : runs) row.fid += r.fid / static_cast<double>(runs.size());
  row.runs = std::move(runs);
  return row;
}

json to_json(const LongTailRun& r) {
  return {{"method", r.method},
          {"cfg_scale", r.cfg_scale},
          {"dropout_p", r.dropout_p},
          {"seed", std::to_string(r.seed)},
          {"accuracy", to_json(r.accuracy)},
          {"best_val_top1", r.best_val_top1},
          {"fid", r.fid},
          {"within_class_var", r.within_class_var},
          {"synthetic_images", r.synthetic_images}};
}

LongTailRun long_tail_run_from_json(const json& j) {
  LongTailRun r;
  try {
    r.method = j.at("method").get<std::string>();
    r.cfg_scale = j.at("cfg_scale").get<double>();
    r.dropout_p = j.at("dropout_p").get<double>();
    r.seed = std::stoull(j.at("seed").get<std::string>());
    r.accuracy = accuracy_from_json(j.at("accuracy"));
    r.best_val_top1 = j.at("best_val_top1").get<double>();
    r.fid = j.at("fid").get<double>();
    r.within_class_var = j.at("within_class_var").get<double>();
    r.synthetic_images = j.at("synthetic_images").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw DataError(std::string("bad run record: ") + e.what());
  }
  return r;
}

json to_json(const FewShotReport& r) {
  std::vector<std::string> seeds;
  for (auto s : r.trial_seeds) seeds.push_back(std::to_string(s));
  return {{"shots", r.shots},
          {"trial_seeds", seeds},
          {"trial_best_acc", r.trial_best_acc},
          {"mean", r.mean},
          {"variance", r.variance},
          {"backbone_checksum_before", std::to_string(r.backbone_checksum_before)},
          {"backbone_checksum_after", std::to_string(r.backbone_checksum_after)}};
}

FewShotReport fewshot_report_from_json(const json& j) {
  FewShotReport r;
  try {
    r.shots = j.at("shots").get<std::int64_t>();
    for (const auto& s : j.at("trial_seeds")) r.trial_seeds.push_back(std::stoull(s.get<std::string>()));
    r.trial_best_acc = j.at("trial_best_acc").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.variance = j.at("variance").get<double>();
    r.backbone_checksum_before = std::stoull(j.at("backbone_checksum_before").get<std::string>());
    r.backbone_checksum_after = std::stoull(j.at("backbone_checksum_after").get<std::string>());
  } catch (const std::exception& e) {
    throw DataError(std::string("bad few-shot record: ") + e.what());
  }
  return r;
}

json to_json(const ReportData& d) {
  json j;
  j["config_hash"] = d.config_hash;
  std::vector<std::string> seeds;
  for (auto s : d.seeds) seeds.push_back(std::to_string(s));
  j["seeds"] = seeds;
  j["feature_extractor"] = d.feature_extractor;
  j["methods"] = json::array();
  for (const auto& m : d.methods) {
    json runs = json::array();
    for (const auto& r : m.runs) runs.push_back(to_json(r));
    j["methods"].push_back(
        {{"method", m.method}, {"cfg_scale", m.cfg_scale}, {"mean", to_json(m.mean)}, {"fid", m.fid}, {"runs", runs}});
  }
  j["cfg_sweep"] = json::array();
  for (const auto& c : d.cfg_sweep) {
    json runs = json::array();
    for (const auto& r : c.runs) runs.push_back(to_json(r));
    j["cfg_sweep"].push_back({{"cfg_scale", c.cfg_scale},
                              {"mean", to_json(c.mean)},
                              {"fid", c.fid},
                              {"within_class_var", c.within_class_var},
                              {"error", c.error},
                              {"runs", runs}});
  }
  j["dropout_sweep"] = json::array();
  for (const auto& r : d.dropout_sweep)
    j["dropout_sweep"].push_back({{"p", r.p},
                                  {"embedding_variance", r.embedding_variance},
                                  {"embedding_variance_se", r.embedding_variance_se},
                                  {"diversity", r.diversity},
                                  {"fid", r.fid},
                                  {"error", r.error}});
  j["fewshot"] = json::array();
  for (const auto& c : d.fewshot) {
    json pts = json::array();
    for (const auto& p : c.points) pts.push_back(to_json(p));
    j["fewshot"].push_back({{"method", c.method}, {"cfg_scale", c.cfg_scale}, {"points", pts}});
  }
  return j;
}

ReportData report_from_json(const json& j) {
  ReportData d;
  try {
    d.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& s : j.at("seeds")) d.seeds.push_back(std::stoull(s.get<std::string>()));
    d.feature_extractor = j.at("feature_extractor").get<std::string>();
    for (const auto& m : j.at("methods")) {
      MethodRow row;
      row.method = m.at("method").get<std::string>();
      row.cfg_scale = m.at("cfg_scale").get<double>();
      row.mean = accuracy_from_json(m.at("mean"));
      row.fid = m.at("fid").get<double>();
      for (const auto& r : m.at("runs")) row.runs.push_back(long_tail_run_from_json(r));
      d.methods.push_back(std::move(row));
    }
    for (const auto& c : j.at("cfg_sweep")) {
      CfgSweepRow row;
      row.cfg_scale = c.at("cfg_scale").get<double>();
      row.mean = accuracy_from_json(c.at("mean"));
      row.fid = c.at("fid").get<double>();
      row.within_class_var = c.at("within_class_var").get<double>();
      row.error = c.at("error").get<std::string>();
      for (const auto& r : c.at("runs")) row.runs.push_back(long_tail_run_from_json(r));
      d.cfg_sweep.push_back(std::move(row));
    }
    for (const auto& r : j.at("dropout_sweep")) {
      DropoutSweepRow row;
      row.p = r.at("p").get<double>();
      row.embedding_variance = r.at("embedding_variance").get<double>();
      row.embedding_variance_se = r.at("embedding_variance_se").get<double>();
      row.diversity = r.at("diversity").get<double>();
      row.fid = r.at("fid").get<double>();
      row.error = r.at("error").get<std::string>();
      d.dropout_sweep.push_back(std::move(row));
    }
    for (const auto& c : j.at("fewshot")) {
      FewShotCurve curve;
      curve.method = c.at("method").get<std::string>();
      curve.cfg_scale = c.at("cfg_scale").get<double>();
      for (const auto& p : c.at("points")) curve.points.push_back(fewshot_report_from_json(p));
      d.fewshot.push_back(std::move(curve));
    }
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("bad report.json: ") + e.what());
  }
  return d;
}

std::string method_table_markdown(const ReportData& d) {
  std::ostringstream o;
  o << "| Method | CFG | Overall | Many | Medium | Few | FID |\n";
  o << "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& m : d.methods)
    o << "| " << m.method << " | " << num(m.cfg_scale, "%g") << " | " << pct(m.mean.overall) << " | "
      << pct(m.mean.many) << " | " << pct(m.mean.medium) << " | " << pct(m.mean.few) << " | "
      << (m.method == kRealOnlyMethod ? std::string("-") : num(m.fid)) << " |\n";
  return o.str();
}

std::string cfg_table_markdown(const ReportData& d) {
  std::ostringstream o;
  o << "| CFG scale | Overall | Many | Medium | Few | FID | Within-class variance |\n";
  o << "|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : d.cfg_sweep) {
    if (!r.error.empty()) {
      o << "| " << num(r.cfg_scale, "%g") << " | failed: " << r.error << " | | | | | |\n";
      continue;
    }
    o << "| " << num(r.cfg_scale, "%g") << " | " << pct(r.mean.overall) << " | " << pct(r.mean.many) << " | "
      << pct(r.mean.medium) << " | " << pct(r.mean.few) << " | " << num(r.fid) << " | " << num(r.within_class_var)
      << " |\n";
  }
  return o.str();
}

std::string dropout_table_markdown(const ReportData& d) {
  std::ostringstream o;
  o << "| Dropout p | Embedding variance | SE | Within-class distance | FID to real |\n";
  o << "|---:|---:|---:|---:|---:|\n";
  for (const auto& r : d.dropout_sweep) {
    if (!r.error.empty()) {
      o << "| " << num(r.p, "%g") << " | failed: " << r.error << " | | | |\n";
      continue;
    }
    o << "| " << num(r.p, "%g") << " | " << num(r.embedding_variance, "%.5f") << " | "
      << num(r.embedding_variance_se, "%.5f") << " | " << num(r.diversity) << " | " << num(r.fid) << " |\n";
  }
  return o.str();
}

std::string fewshot_table_markdown(const ReportData& d) {
  std::ostringstream o;
  o << "| Method | CFG | Shots | Trials | Mean | Variance | Per-trial best val top-1 |\n";
  o << "|---|---:|---:|---:|---:|---:|---|\n";
  for (const auto& c : d.fewshot)
    for (const auto& p : c.points) {
      o << "| " << c.method << " | " << num(c.cfg_scale, "%g") << " | " << p.shots << " | "
        << p.trial_best_acc.size() << " | " << pct(p.mean) << " | " << num(p.variance * 1e4, "%.3f") << " | ";
      for (std::size_t i = 0; i < p.trial_best_acc.size(); ++i)
        o << (i ? ", " : "") << pct(p.trial_best_acc[i]);
      o << " |\n";
    }
  return o.str();
}

std::vector<std::filesystem::path> emit_report(const ReportData& d, const std::filesystem::path& outdir) {
  if (d.empty()) throw ParameterError("report has no results; nothing written");

  std::vector<std::pair<std::string, std::string>> files;
  std::ostringstream md;
  md << "# Experiment report\n\n";
  md << "- config hash: `" << d.config_hash << "`\n- seeds:";
  for (auto s : d.seeds) md << " " << s;
  md << "\n- FID feature extractor: " << d.feature_extractor << "\n";
  md << "- accuracies are top-1 in percent on the balanced test split; few-shot values use the validation split\n\n";
  if (!d.methods.empty()) md << "## Long-tail accuracy by conditioning method\n\n" << method_table_markdown(d) << "\n";
  if (!d.cfg_sweep.empty()) md << "## CFG scale sweep\n\n" << cfg_table_markdown(d) << "\n";
  if (!d.dropout_sweep.empty()) md << "## Embedding dropout sweep\n\n" << dropout_table_markdown(d) << "\n";
  if (!d.fewshot.empty())
    md << "## Few-shot last-layer fine-tuning\n\nVariance column is in squared percentage points.\n\n"
       << fewshot_table_markdown(d) << "\n";
  files.emplace_back("report.md", md.str());
  files.emplace_back("report.json", to_json(d).dump(2) + "\n");

  if (!d.fewshot.empty()) {
    std::vector<Series> series;
    for (const auto& c : d.fewshot) {
      Series s;
      s.name = c.method + " (cfg " + num(c.cfg_scale, "%g") + ")";
      for (const auto& p : c.points) {
        s.x.push_back(static_cast<double>(p.shots));
        s.y.push_back(p.mean * 100.0);
        s.band.push_back(std::sqrt(p.variance) * 100.0);
      }
      series.push_back(std::move(s));
    }
    files.emplace_back("fewshot.svg", svg_chart("Few-shot accuracy vs shots", "shots per class",
                                                "best val top-1 (%)", series, true));
  }
  if (!d.cfg_sweep.empty()) {
    Series overall{"overall", {}, {}, {}}, many{"many", {}, {}, {}}, medium{"medium", {}, {}, {}},
        few{"few", {}, {}, {}};
    for (const auto& r : d.cfg_sweep) {
      if (!r.error.empty()) continue;
      overall.x.push_back(r.cfg_scale);
      overall.y.push_back(r.mean.overall * 100.0);
      auto add = [&](Series& s, std::optional<double> v) {
        if (!v) return;
        s.x.push_back(r.cfg_scale);
        s.y.push_back(*v * 100.0);
      };
      add(many, r.mean.many);
      add(medium, r.mean.medium);
      add(few, r.mean.few);
    }
    std::vector<Series> series;
    for (auto* s : {&overall, &many, &medium, &few})
      if (!s->x.empty()) series.push_back(*s);
    if (!series.empty())
      files.emplace_back("cfg_sweep.svg",
                         svg_chart("Top-1 vs CFG scale", "CFG scale", "test top-1 (%)", series, false));
  }
  if (!d.dropout_sweep.empty()) {
    Series div{"within-class distance", {}, {}, {}}, fid{"FID to real", {}, {}, {}};
    for (const auto& r : d.dropout_sweep) {
      if (!r.error.empty()) continue;
      div.x.push_back(r.p);
      div.y.push_back(r.diversity);
      fid.x.push_back(r.p);
      fid.y.push_back(r.fid);
    }
    if (!div.x.empty()) {
      files.emplace_back("dropout_diversity.svg",
                         svg_chart("Diversity vs dropout p", "dropout p", "mean pairwise distance", {div}, false));
      files.emplace_back("dropout_fid.svg", svg_chart("FID vs dropout p", "dropout p", "FID", {fid}, false));
    }
  }

  try {
    std::filesystem::create_directories(outdir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw DataError("cannot create report directory " + outdir.string() + ": " + e.what());
  }
  if (!std::filesystem::is_directory(outdir)) throw DataError(outdir.string() + " is not a directory");
  std::vector<std::filesystem::path> written;
  for (const auto& [name, body] : files) {
    write_file_atomic(outdir / name, body);
    written.push_back(outdir / name);
  }
  return written;
}

}  // namespace augsynth::harness
