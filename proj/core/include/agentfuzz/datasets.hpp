#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agentfuzz/model.hpp"

namespace agentfuzz {

enum class DatasetTag { HumanEvalEt, MbppEt, CodeContest, CoderEval, Custom };

std::string_view to_string(DatasetTag tag);
DatasetTag parse_dataset_tag(std::string_view name);

struct DatasetRecord {
  std::string task_id;
  std::string description;
  std::optional<std::string> entry_point;
  TestSuite suite;
  DatasetTag tag = DatasetTag::Custom;
  std::optional<std::string> canonical_solution;

  Question question() const { return Question::from_dataset(task_id, description, entry_point); }
  /// Runnable reference program. A HumanEval-style function body is joined
  /// to its prompt.
  std::optional<std::string> reference_source() const;
};

/// Upstream field names for one dataset shape. Each list is tried in order;
/// the first key present wins.
struct FieldMapping {
  std::vector<std::string> id_keys;
  std::vector<std::string> description_keys;
  std::vector<std::string> entry_point_keys;
  // Assertion mode: list of assertion snippets, or a single string.
  std::vector<std::string> assertion_keys;
  // A "def check(candidate)" test body, run as one case.
  std::vector<std::string> check_function_keys;
  std::vector<std::string> setup_keys;
  std::vector<std::string> canonical_keys;
  // Stdio mode: objects of the form {"input": [...], "output": [...]}.
  std::vector<std::string> stdio_keys;
  SuiteMode mode = SuiteMode::AssertionBased;
  // Assertions call `candidate`; bind it to the entry point per case.
  bool candidate_alias = false;
  // Append the first assertion to the description (MBPP convention).
  bool show_first_test = false;
  // Key holding a complete TestSuite object (custom shape).
  std::optional<std::string> suite_key;
};

FieldMapping default_mapping(DatasetTag tag);
/// Overrides fields of `base` from a JSON object with the same field names.
FieldMapping mapping_from_json(const nlohmann::json& j, FieldMapping base);

/// One record per non-blank line. Throws FormatError naming the line, or
/// EmptyDataset.
std::vector<DatasetRecord> parse_dataset(std::istream& in, DatasetTag tag,
                                         const FieldMapping& mapping,
                                         std::string_view source_name = "<stream>");
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path, DatasetTag tag);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path, DatasetTag tag,
                                        const FieldMapping& mapping);

DatasetRecord record_from_json(const nlohmann::json& j, DatasetTag tag,
                               const FieldMapping& mapping);
void to_json(nlohmann::json& j, const DatasetRecord& r);

enum class SplitSide { Fuzz, Repair };

struct SplitSpec {
  double ratio = 0.5;
  std::uint64_t seed = 0;
  std::map<std::string, SplitSide> assignment;

  std::vector<std::string> fuzz_ids() const;
  std::vector<std::string> repair_ids() const;
};

/// Seeded Fisher-Yates over the sorted ids; the first round-half-up(ratio*N)
/// go to fuzzing. Throws EmptyDataset below two ids.
SplitSpec split_ids(std::vector<std::string> ids, double ratio, std::uint64_t seed);
SplitSpec split_dataset(const std::vector<DatasetRecord>& records, double ratio,
                        std::uint64_t seed);

void to_json(nlohmann::json& j, const SplitSpec& s);
void from_json(const nlohmann::json& j, SplitSpec& s);

}  // namespace agentfuzz
