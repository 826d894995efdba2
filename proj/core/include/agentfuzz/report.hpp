#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentfuzz/campaign.hpp"
#include "agentfuzz/model.hpp"

namespace agentfuzz {

/// Share of questions with at least one passing trial. Every batch must have
/// exactly k trials (BatchSizeMismatch otherwise).
double pass_at_k(const std::vector<TrialBatch>& batches, std::size_t k);

/// (original - after) / original. Throws UndefinedBaseline when original is 0.
double drop_rate(double original, double after_fuzzing);

/// solved / total. Throws EmptyFailureSet when total is 0.
double repair_ratio(std::size_t total, std::size_t solved);

/// Rounds half away from zero to `decimals` places.
double round_half_away(double value, int decimals);

/// Fraction rendered as a percentage with one decimal, e.g. 0.3276 -> "32.8".
std::string format_percent(double fraction);

struct DropRow {
  std::string dataset;
  std::size_t questions = 0;
  double pass_at_k_original = 0.0;
  double pass_at_k_fuzzing = 0.0;
  // Absent when the original pass@k is 0.
  std::optional<double> drop_pct;
};

struct RepairRow {
  std::string label;
  std::size_t total_failures = 0;
  std::size_t solved = 0;
  double ratio_pct = 0.0;
};

struct TimingRow {
  std::string configuration;
  std::size_t trials = 0;
  double mean_wall_s = 0.0;
};

DropRow make_drop_row(std::string dataset, std::size_t questions, std::size_t solved_original,
                      std::size_t solved_after);
RepairRow make_repair_row(std::string label, const std::vector<TrialBatch>& repaired);
/// Mean wall-clock seconds per trial over all batches.
TimingRow make_timing_row(std::string configuration, const std::vector<TrialBatch>& batches);

struct CampaignReport {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<DropRow> drop_rows;
  std::vector<RepairRow> repair_rows;
  std::vector<TimingRow> timing_rows;
  std::vector<FailureRecord> failures;

  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

/// Drop row for one campaign: a root counts as solved after fuzzing unless a
/// failure was found in its branch. Timing covers every recorded batch.
CampaignReport campaign_report(const CampaignState& state, const std::string& dataset,
                               const std::string& configuration,
                               nlohmann::json metadata = nlohmann::json::object());

enum class ReportFormat { Markdown, Json, Both };

/// "md"/"markdown", "json" or "both"; anything else throws ContractError.
ReportFormat parse_report_format(std::string_view name);

/// Writes report.md and/or report.json plus failures_to_label.jsonl, whose
/// records carry an empty label slot for annotation. Throws IoError.
std::vector<std::filesystem::path> emit_report(const CampaignReport& report,
                                               const std::filesystem::path& out_dir,
                                               ReportFormat format = ReportFormat::Both);

}  // namespace agentfuzz
