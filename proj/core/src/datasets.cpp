#include "agentfuzz/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/random.hpp"
#include "agentfuzz/text.hpp"

namespace agentfuzz {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<std::string_view, DatasetTag>, 5> kTagNames{{
    {"humaneval_et", DatasetTag::HumanEvalEt},
    {"mbpp_et", DatasetTag::MbppEt},
    {"codecontest", DatasetTag::CodeContest},
    {"codereval", DatasetTag::CoderEval},
    {"custom", DatasetTag::Custom},
}};

const json* first_key(const json& j, const std::vector<std::string>& keys) {
  for (const auto& k : keys) {
    if (auto it = j.find(k); it != j.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

std::optional<std::string> first_string(const json& j, const std::vector<std::string>& keys) {
  const auto* v = first_key(j, keys);
  if (v == nullptr) return std::nullopt;
  if (v->is_string()) return v->get<std::string>();
  if (v->is_number_integer()) return std::to_string(v->get<long long>());
  throw FormatError("field '" + keys.front() + "' must be a string");
}

std::vector<std::string> string_list(const json& v) {
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw FormatError("expected a string or a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw FormatError("expected a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::optional<std::string> guess_entry_point(const std::vector<std::string>& assertions) {
  static const std::regex call(R"(([A-Za-z_][A-Za-z0-9_.]*)\s*\()");
  static const std::set<std::string> kNotEntry = {
      "candidate", "set",   "sorted", "list",  "tuple", "dict", "abs", "len", "round",
      "str",       "int",   "float",  "bool",  "all",   "any",  "sum", "min", "max",
      "isinstance", "type", "frozenset", "range", "map", "zip", "repr", "assert", "not"};
  for (const auto& a : assertions) {
    for (auto it = std::sregex_iterator(a.begin(), a.end(), call); it != std::sregex_iterator();
         ++it) {
      const auto name = (*it)[1].str();
      if (name.find('.') != std::string::npos || kNotEntry.contains(name)) continue;
      return name;
    }
  }
  return std::nullopt;
}

std::vector<std::string> list_field(const json& j, const std::vector<std::string>& keys) {
  std::vector<std::string> out;
  for (const auto& k : keys) {
    if (auto it = j.find(k); it != j.end() && !it->is_null()) {
      auto more = string_list(*it);
      out.insert(out.end(), more.begin(), more.end());
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(DatasetTag tag) {
  for (const auto& [name, t] : kTagNames) {
    if (t == tag) return name;
  }
  return "custom";
}

DatasetTag parse_dataset_tag(std::string_view name) {
  for (const auto& [n, t] : kTagNames) {
    if (n == name) return t;
  }
  throw FormatError("unknown dataset tag '" + std::string(name) + "'");
}

FieldMapping default_mapping(DatasetTag tag) {
  FieldMapping m;
  switch (tag) {
    case DatasetTag::HumanEvalEt:
      m.id_keys = {"task_id"};
      m.description_keys = {"prompt"};
      m.entry_point_keys = {"entry_point"};
      m.assertion_keys = {"test_case_list"};
      m.check_function_keys = {"test"};
      m.canonical_keys = {"canonical_solution"};
      m.candidate_alias = true;
      break;
    case DatasetTag::MbppEt:
      m.id_keys = {"task_id"};
      m.description_keys = {"text", "prompt"};
      m.entry_point_keys = {"entry_point"};
      m.assertion_keys = {"test_list"};
      m.setup_keys = {"test_setup_code"};
      m.canonical_keys = {"code", "canonical_solution"};
      m.show_first_test = true;
      break;
    case DatasetTag::CodeContest:
      m.id_keys = {"task_id", "name"};
      m.description_keys = {"description"};
      m.stdio_keys = {"public_tests", "private_tests", "generated_tests"};
      m.canonical_keys = {"canonical_solution"};
      m.mode = SuiteMode::StdioBased;
      break;
    case DatasetTag::CoderEval:
      m.id_keys = {"task_id", "_id", "question_id"};
      m.description_keys = {"description", "docstring", "input"};
      m.entry_point_keys = {"entry_point", "name"};
      m.assertion_keys = {"test_list"};
      m.check_function_keys = {"test"};
      m.setup_keys = {"setup_code", "context"};
      m.canonical_keys = {"canonical_solution", "code"};
      break;
    case DatasetTag::Custom:
      m.id_keys = {"task_id"};
      m.description_keys = {"description"};
      m.entry_point_keys = {"entry_point"};
      m.canonical_keys = {"canonical_solution"};
      m.suite_key = "suite";
      break;
  }
  return m;
}

FieldMapping mapping_from_json(const json& j, FieldMapping base) {
  auto list = [&](const char* key, std::vector<std::string>& dst) {
    if (j.contains(key)) dst = string_list(j.at(key));
  };
  list("id_keys", base.id_keys);
  list("description_keys", base.description_keys);
  list("entry_point_keys", base.entry_point_keys);
  list("assertion_keys", base.assertion_keys);
  list("check_function_keys", base.check_function_keys);
  list("setup_keys", base.setup_keys);
  list("canonical_keys", base.canonical_keys);
  list("stdio_keys", base.stdio_keys);
  if (j.contains("mode")) base.mode = parse_suite_mode(j.at("mode").get<std::string>());
  base.candidate_alias = j.value("candidate_alias", base.candidate_alias);
  base.show_first_test = j.value("show_first_test", base.show_first_test);
  if (j.contains("suite_key")) base.suite_key = j.at("suite_key").get<std::string>();
  return base;
}

DatasetRecord record_from_json(const json& j, DatasetTag tag, const FieldMapping& m) {
  if (!j.is_object()) throw FormatError("record is not a JSON object");
  DatasetRecord r;
  r.tag = tag;
  auto id = first_string(j, m.id_keys);
  if (!id || id->empty()) throw FormatError("missing task id");
  r.task_id = std::move(*id);
  auto desc = first_string(j, m.description_keys);
  if (!desc || text::trim(*desc).empty()) throw FormatError("missing description");
  r.description = std::move(*desc);
  r.entry_point = first_string(j, m.entry_point_keys);
  r.canonical_solution = first_string(j, m.canonical_keys);

  if (m.suite_key) {
    auto it = j.find(*m.suite_key);
    if (it == j.end()) throw FormatError("missing test field '" + *m.suite_key + "'");
    try {
      r.suite = it->get<TestSuite>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed suite: ") + e.what());
    } catch (const InvariantViolation& e) {
      throw FormatError(std::string("malformed suite: ") + e.what());
    }
    return r;
  }

  r.suite.mode = m.mode;
  if (m.mode == SuiteMode::StdioBased) {
    for (const auto& key : m.stdio_keys) {
      auto it = j.find(key);
      if (it == j.end() || it->is_null()) continue;
      const auto inputs = string_list(it->at("input"));
      const auto outputs = string_list(it->at("output"));
      if (inputs.size() != outputs.size()) {
        throw FormatError("'" + key + "' has " + std::to_string(inputs.size()) + " inputs and " +
                          std::to_string(outputs.size()) + " outputs");
      }
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        r.suite.cases.emplace_back(StdioCase{inputs[i], outputs[i]});
      }
    }
    if (r.suite.cases.empty()) throw FormatError("missing test field (stdio cases)");
    return r;
  }

  r.suite.setup_code = first_string(j, m.setup_keys);
  if (r.suite.setup_code && text::trim(*r.suite.setup_code).empty()) r.suite.setup_code.reset();
  auto assertions = list_field(j, m.assertion_keys);
  assertions.erase(std::remove_if(assertions.begin(), assertions.end(),
                                  [](const auto& a) { return text::trim(a).empty(); }),
                   assertions.end());
  if (!r.entry_point) r.entry_point = guess_entry_point(assertions);
  if (assertions.empty()) {
    if (auto check = first_string(j, m.check_function_keys); check && !text::trim(*check).empty()) {
      if (!r.entry_point) throw FormatError("check-function tests need an entry_point");
      assertions.push_back(*check + "\ncheck(" + *r.entry_point + ")");
    }
  } else if (m.candidate_alias) {
    if (!r.entry_point) throw FormatError("candidate assertions need an entry_point");
    for (auto& a : assertions) a = "candidate = " + *r.entry_point + "\n" + a;
  }
  if (assertions.empty()) throw FormatError("missing test field");
  if (m.show_first_test) {
    r.description += "\nYour code should pass this test:\n" + assertions.front();
  }
  for (auto& a : assertions) r.suite.cases.emplace_back(std::move(a));
  return r;
}

std::optional<std::string> DatasetRecord::reference_source() const {
  if (!canonical_solution) return std::nullopt;
  const auto& c = *canonical_solution;
  if (!c.empty() && (c.front() == ' ' || c.front() == '\t')) return description + c;
  return c;
}

void to_json(json& j, const DatasetRecord& r) {
  j = json{{"task_id", r.task_id}, {"description", r.description}, {"suite", r.suite}};
  if (r.entry_point) j["entry_point"] = *r.entry_point;
  if (r.canonical_solution) j["canonical_solution"] = *r.canonical_solution;
}

std::vector<DatasetRecord> parse_dataset(std::istream& in, DatasetTag tag,
                                         const FieldMapping& mapping,
                                         std::string_view source_name) {
  std::vector<DatasetRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto where = std::string(source_name) + ":" + std::to_string(line_no) + ": ";
    DatasetRecord r;
    try {
      r = record_from_json(json::parse(line), tag, mapping);
    } catch (const json::exception& e) {
      throw FormatError(where + "invalid JSON: " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    } catch (const Error& e) {
      throw FormatError(where + e.what());
    }
    if (!seen.insert(r.task_id).second) {
      throw FormatError(where + "duplicate task id '" + r.task_id + "'");
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw EmptyDataset(std::string(source_name) + " holds no records");
  return out;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path, DatasetTag tag) {
  return load_dataset(path, tag, default_mapping(tag));
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path, DatasetTag tag,
                                        const FieldMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in, tag, mapping, path.string());
}

// ---------------------------------------------------------------------------

std::vector<std::string> SplitSpec::fuzz_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, side] : assignment) {
    if (side == SplitSide::Fuzz) out.push_back(id);
  }
  return out;
}

std::vector<std::string> SplitSpec::repair_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, side] : assignment) {
    if (side == SplitSide::Repair) out.push_back(id);
  }
  return out;
}

SplitSpec split_ids(std::vector<std::string> ids, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvariantViolation("split ratio must be in (0,1)");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw FormatError("duplicate task ids in split input");
  }
  if (ids.size() < 2) throw EmptyDataset("splitting needs at least two records");
  Rng rng(seed);
  fisher_yates(ids, rng);
  const auto n_fuzz = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(ids.size()) + 0.5));
  SplitSpec s;
  s.ratio = ratio;
  s.seed = seed;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    s.assignment[ids[i]] = i < n_fuzz ? SplitSide::Fuzz : SplitSide::Repair;
  }
  return s;
}

SplitSpec split_dataset(const std::vector<DatasetRecord>& records, double ratio,
                        std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.task_id);
  return split_ids(std::move(ids), ratio, seed);
}

void to_json(json& j, const SplitSpec& s) {
  j = json{{"schema_version", kSchemaVersion},
           {"ratio", s.ratio},
           {"seed", s.seed},
           {"fuzz", s.fuzz_ids()},
           {"repair", s.repair_ids()}};
}

void from_json(const json& j, SplitSpec& s) {
  s.ratio = j.at("ratio").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.assignment.clear();
  for (const auto& id : j.at("fuzz")) s.assignment[id.get<std::string>()] = SplitSide::Fuzz;
  for (const auto& id : j.at("repair")) {
    if (!s.assignment.emplace(id.get<std::string>(), SplitSide::Repair).second) {
      throw SchemaError("split lists '" + id.get<std::string>() + "' on both sides");
    }
  }
}

}  // namespace agentfuzz
