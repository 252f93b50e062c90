#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "augsynth/harness/pipeline.hpp"

namespace augsynth::harness {

/// One row of the per-method table (means over seeds).
struct MethodRow {
  std::string method;
  double cfg_scale = 0.0;
  std::vector<LongTailRun> runs;
  CategoryAccuracy mean;
  double fid = 0.0;
};

MethodRow summarize_method(std::vector<LongTailRun> runs);

struct FewShotCurve {
  std::string method;
  double cfg_scale = 0.0;
  std::vector<FewShotReport> points;  // one per shot count
};

struct ReportData {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::string feature_extractor = "desk encoder penultimate features (internal extractor, not Inception)";
  std::vector<MethodRow> methods;
  std::vector<CfgSweepRow> cfg_sweep;
  std::vector<DropoutSweepRow> dropout_sweep;
  std::vector<FewShotCurve> fewshot;

  bool empty() const noexcept {
    return methods.empty() && cfg_sweep.empty() && dropout_sweep.empty() && fewshot.empty();
  }
};

nlohmann::json to_json(const LongTailRun& r);
LongTailRun long_tail_run_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FewShotReport& r);
FewShotReport fewshot_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReportData& data);
ReportData report_from_json(const nlohmann::json& j);

/// Markdown table text, exposed for tests.
std::string method_table_markdown(const ReportData& data);
std::string cfg_table_markdown(const ReportData& data);
std::string dropout_table_markdown(const ReportData& data);
std::string fewshot_table_markdown(const ReportData& data);

/// Writes the tables (markdown + report.json) and SVG plots into outdir.
/// Nothing is written when `data` is empty or outdir is unusable; files
/// appear only after all of them were rendered. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const ReportData& data, const std::filesystem::path& outdir);

}  // namespace augsynth::harness
