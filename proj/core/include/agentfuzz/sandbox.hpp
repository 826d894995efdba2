#pragma once

// Host side of candidate-code evaluation. Each job runs in a fresh runner
// process that speaks a one-line JSON protocol on stdin/stdout:
//
//   host -> runner  {"job_id", "candidate_source", "mode", "setup_code",
//                    "cases", "per_case_timeout_s"}\n   (then stdin closes)
//   runner -> host  {"job_id", "per_case": [...], "stderr_excerpt"}\n, exit 0
//
// Any other exit status is a SandboxError verdict. The host kills the whole
// process group once total_timeout_s elapses; that job is a Timeout.

#include <atomic>
#include <cstdint>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "agentfuzz/model.hpp"

namespace agentfuzz {

inline constexpr std::size_t kStderrCap = 4096;

struct ExecutionJob {
  std::string job_id;
  std::string candidate_source;
  TestSuite suite;
  double per_case_timeout_s = 5.0;
  double total_timeout_s = 60.0;
  int memory_cap_mb = 512;
  // Byte-exact stdout comparison; adds "stdio_compare":"exact" to the frame.
  bool stdio_exact = false;

  void validate() const;
};

enum class CaseOutcome { Pass, Fail, Timeout, Error };

std::string_view to_string(CaseOutcome c);

struct ExecutionResult {
  std::string job_id;
  std::vector<CaseOutcome> per_case;
  Verdict aggregate = Verdict::SandboxError;
  std::string stderr_excerpt;
};

/// Pass iff every case passed; otherwise Timeout if any case timed out,
/// RuntimeError if any errored, else Fail. Empty input is a SandboxError.
Verdict aggregate_verdict(const std::vector<CaseOutcome>& per_case);

/// One line, newline-terminated.
std::string encode_job(const ExecutionJob& job);
ExecutionJob decode_job(std::string_view line);
std::string encode_result(const ExecutionResult& result);
/// Throws ProtocolError on malformed frames; the aggregate is recomputed and
/// stderr_excerpt capped at kStderrCap.
ExecutionResult decode_result(std::string_view line);

struct SandboxConfig {
  // argv of the runner, e.g. {"python3", "/path/runner.py"}.
  std::vector<std::string> runner_command;
  int max_concurrent = 4;
  double per_case_timeout_s = 5.0;
  double total_timeout_s = 60.0;
  int memory_cap_mb = 512;
  bool stdio_exact = false;
};

class ProcessSandbox {
 public:
  explicit ProcessSandbox(SandboxConfig config);

  /// Runs one job in a fresh process and temp directory. Never throws for
  /// runner faults; they become SandboxError results.
  ExecutionResult evaluate(const ExecutionJob& job);

  const SandboxConfig& config() const { return config_; }

 private:
  SandboxConfig config_;
  std::counting_semaphore<1024> slots_;
};

struct EvaluationOutcome {
  Verdict verdict = Verdict::SandboxError;
  std::string detail;
};

/// Ground-truth judge used by the MAS pipeline.
class CodeEvaluator {
 public:
  virtual ~CodeEvaluator() = default;
  virtual EvaluationOutcome evaluate(const CodeCandidate& code, const TestSuite& suite) = 0;
};

class SandboxEvaluator final : public CodeEvaluator {
 public:
  explicit SandboxEvaluator(std::shared_ptr<ProcessSandbox> sandbox);
  EvaluationOutcome evaluate(const CodeCandidate& code, const TestSuite& suite) override;

 private:
  std::shared_ptr<ProcessSandbox> sandbox_;
  std::atomic<std::uint64_t> next_id_{0};
};

}  // namespace agentfuzz
