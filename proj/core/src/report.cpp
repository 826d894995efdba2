#include "agentfuzz/report.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "agentfuzz/errors.hpp"

namespace agentfuzz {

using nlohmann::json;

double pass_at_k(const std::vector<TrialBatch>& batches, std::size_t k) {
  if (batches.empty()) return 0.0;
  std::size_t solved = 0;
  for (const auto& b : batches) {
    if (b.n != k || b.trials.size() != k) {
      throw BatchSizeMismatch("pass@" + std::to_string(k) + " over a batch of " +
                              std::to_string(b.n) + " trials ('" + b.question_id + "')");
    }
    if (!is_unsolved(b)) ++solved;
  }
  return static_cast<double>(solved) / static_cast<double>(batches.size());
}

double drop_rate(double original, double after_fuzzing) {
  if (original == 0.0) throw UndefinedBaseline("drop rate of a zero original pass rate");
  return (original - after_fuzzing) / original;
}

double repair_ratio(std::size_t total, std::size_t solved) {
  if (total == 0) throw EmptyFailureSet("repair ratio over an empty failure set");
  if (solved > total) throw InvariantViolation("solved exceeds total failures");
  return static_cast<double>(solved) / static_cast<double>(total);
}

double round_half_away(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // Absorbs representation error: 100*0.145 is 14.499999999999998.
  const double scaled = value * scale;
  const double nudged = scaled + std::copysign(1e-9 * std::max(1.0, std::fabs(scaled)), scaled);
  return std::round(nudged) / scale;
}

std::string format_percent(double fraction) {
  return fmt::format("{:.1f}", round_half_away(100.0 * fraction, 1));
}

DropRow make_drop_row(std::string dataset, std::size_t questions, std::size_t solved_original,
                      std::size_t solved_after) {
  DropRow r;
  r.dataset = std::move(dataset);
  r.questions = questions;
  if (questions > 0) {
    r.pass_at_k_original = static_cast<double>(solved_original) / static_cast<double>(questions);
    r.pass_at_k_fuzzing = static_cast<double>(solved_after) / static_cast<double>(questions);
  }
  if (r.pass_at_k_original > 0.0) {
    r.drop_pct = 100.0 * drop_rate(r.pass_at_k_original, r.pass_at_k_fuzzing);
  }
  return r;
}

RepairRow make_repair_row(std::string label, const std::vector<TrialBatch>& repaired) {
  RepairRow r;
  r.label = std::move(label);
  r.total_failures = repaired.size();
  for (const auto& b : repaired) {
    if (!is_unsolved(b)) ++r.solved;
  }
  r.ratio_pct = 100.0 * repair_ratio(r.total_failures, r.solved);
  return r;
}

TimingRow make_timing_row(std::string configuration, const std::vector<TrialBatch>& batches) {
  TimingRow r;
  r.configuration = std::move(configuration);
  std::int64_t total_ms = 0;
  for (const auto& b : batches) {
    for (const auto& t : b.trials) {
      total_ms += t.wall_time_ms;
      ++r.trials;
    }
  }
  if (r.trials > 0) r.mean_wall_s = static_cast<double>(total_ms) / 1000.0 / r.trials;
  return r;
}

json CampaignReport::to_json() const {
  json j{{"schema_version", kSchemaVersion}, {"metadata", metadata}};
  j["drop"] = json::array();
  for (const auto& r : drop_rows) {
    j["drop"].push_back({{"dataset", r.dataset},
                         {"questions", r.questions},
                         {"pass_at_k_original", r.pass_at_k_original},
                         {"pass_at_k_fuzzing", r.pass_at_k_fuzzing},
                         {"drop_pct", r.drop_pct ? json(*r.drop_pct) : json(nullptr)}});
  }
  j["repair"] = json::array();
  for (const auto& r : repair_rows) {
    j["repair"].push_back({{"label", r.label},
                           {"total_failures", r.total_failures},
                           {"solved", r.solved},
                           {"ratio_pct", r.ratio_pct}});
  }
  j["timing"] = json::array();
  for (const auto& r : timing_rows) {
    j["timing"].push_back(
        {{"configuration", r.configuration}, {"trials", r.trials}, {"mean_wall_s", r.mean_wall_s}});
  }
  j["failure_count"] = failures.size();
  return j;
}

std::string CampaignReport::to_markdown() const {
  std::string md = "# agentfuzz report\n\n";
  if (!metadata.empty()) {
    for (const auto& [k, v] : metadata.items()) {
      md += fmt::format("- **{}**: {}\n", k, v.is_string() ? v.get<std::string>() : v.dump());
    }
    md += "\n";
  }
  if (!drop_rows.empty()) {
    md += "## Pass@k after fuzzing\n\n| Dataset | Questions | Original | Fuzzing | Drop (%) |\n"
          "|---|---:|---:|---:|---:|\n";
    for (const auto& r : drop_rows) {
      md += fmt::format("| {} | {} | {:.4f} | {:.4f} | {} |\n", r.dataset, r.questions,
                        r.pass_at_k_original, r.pass_at_k_fuzzing,
                        r.drop_pct ? format_percent(*r.drop_pct / 100.0) : std::string("n/a"));
    }
    md += "\n";
  }
  if (!repair_rows.empty()) {
    md += "## Repair\n\n| Configuration | Total | Solved | Ratio (%) |\n|---|---:|---:|---:|\n";
    for (const auto& r : repair_rows) {
      md += fmt::format("| {} | {} | {} | {} |\n", r.label, r.total_failures, r.solved,
                        format_percent(r.ratio_pct / 100.0));
    }
    md += "\n";
  }
  if (!timing_rows.empty()) {
    md += "## Time cost\n\n| Configuration | Trials | Mean wall time (s) |\n|---|---:|---:|\n";
    for (const auto& r : timing_rows) {
      md += fmt::format("| {} | {} | {:.1f} |\n", r.configuration, r.trials,
                        round_half_away(r.mean_wall_s, 1));
    }
    md += "\n";
  }
  md += fmt::format("Failures recorded: {}\n", failures.size());
  return md;
}

CampaignReport campaign_report(const CampaignState& state, const std::string& dataset,
                               const std::string& configuration, json metadata) {
  CampaignReport rep;
  rep.metadata = std::move(metadata);
  std::set<std::string> failed_roots;
  for (const auto& f : state.failures) failed_roots.insert(f.question.root_id);
  std::size_t solved_after = 0;
  for (const auto& r : state.pool.roots) {
    if (!failed_roots.contains(r)) ++solved_after;
  }
  rep.drop_rows.push_back(
      make_drop_row(dataset, state.dataset_size, state.pool.roots.size(), solved_after));
  std::vector<TrialBatch> batches;
  for (const auto& [id, node] : state.pool.nodes) batches.push_back(node.baseline);
  for (const auto& f : state.failures) batches.push_back(f.batch);
  rep.timing_rows.push_back(make_timing_row(configuration, batches));
  rep.failures = state.failures;
  return rep;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "md" || name == "markdown") return ReportFormat::Markdown;
  if (name == "json") return ReportFormat::Json;
  if (name == "both") return ReportFormat::Both;
  throw ContractError("unknown report format '" + std::string(name) + "'");
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << content;
  if (!out) throw IoError("write failed for " + p.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const CampaignReport& report,
                                               const std::filesystem::path& out_dir,
                                               ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  if (format != ReportFormat::Json) {
    written.push_back(out_dir / "report.md");
    write_file(written.back(), report.to_markdown());
  }
  if (format != ReportFormat::Markdown) {
    written.push_back(out_dir / "report.json");
    write_file(written.back(), report.to_json().dump(2) + "\n");
  }
  std::string lines;
  for (const auto& f : report.failures) {
    json j = f;
    j["label"] = nullptr;
    lines += j.dump() + "\n";
  }
  written.push_back(out_dir / "failures_to_label.jsonl");
  write_file(written.back(), lines);
  return written;
}

}  // namespace agentfuzz
