#include "agentfuzz/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/text.hpp"

namespace agentfuzz {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

constexpr std::size_t kStdoutCap = 4 << 20;
constexpr std::size_t kHostStderrCap = 64 << 10;

CaseOutcome parse_case(std::string_view s) {
  if (s == "pass") return CaseOutcome::Pass;
  if (s == "fail") return CaseOutcome::Fail;
  if (s == "timeout") return CaseOutcome::Timeout;
  if (s == "error") return CaseOutcome::Error;
  throw ProtocolError("unknown per_case entry '" + std::string(s) + "'");
}

ordered_json cases_json(const TestSuite& suite) {
  ordered_json cases = ordered_json::array();
  for (const auto& c : suite.cases) {
    if (const auto* a = std::get_if<std::string>(&c)) {
      cases.push_back(*a);
    } else {
      const auto& io = std::get<StdioCase>(c);
      cases.push_back(ordered_json{{"stdin_text", io.stdin_text},
                                   {"expected_stdout", io.expected_stdout}});
    }
  }
  return cases;
}

}  // namespace

std::string_view to_string(CaseOutcome c) {
  switch (c) {
    case CaseOutcome::Pass: return "pass";
    case CaseOutcome::Fail: return "fail";
    case CaseOutcome::Timeout: return "timeout";
    case CaseOutcome::Error: return "error";
  }
  return "error";
}

void ExecutionJob::validate() const {
  if (job_id.empty()) throw ContractError("job_id is empty");
  suite.validate();
  if (per_case_timeout_s <= 0.0 || total_timeout_s <= 0.0) {
    throw ContractError("timeouts must be positive");
  }
  if (total_timeout_s < per_case_timeout_s) {
    throw ContractError("total_timeout_s must be >= per_case_timeout_s");
  }
  if (memory_cap_mb <= 0) throw ContractError("memory_cap_mb must be positive");
}

Verdict aggregate_verdict(const std::vector<CaseOutcome>& per_case) {
  if (per_case.empty()) return Verdict::SandboxError;
  bool any_timeout = false, any_error = false, all_pass = true;
  for (auto c : per_case) {
    all_pass = all_pass && c == CaseOutcome::Pass;
    any_timeout = any_timeout || c == CaseOutcome::Timeout;
    any_error = any_error || c == CaseOutcome::Error;
  }
  if (all_pass) return Verdict::Pass;
  if (any_timeout) return Verdict::Timeout;
  if (any_error) return Verdict::RuntimeError;
  return Verdict::Fail;
}

std::string encode_job(const ExecutionJob& job) {
  ordered_json j;
  j["job_id"] = job.job_id;
  j["candidate_source"] = job.candidate_source;
  j["mode"] = to_string(job.suite.mode);
  if (job.suite.setup_code) {
    j["setup_code"] = *job.suite.setup_code;
  } else {
    j["setup_code"] = nullptr;
  }
  j["cases"] = cases_json(job.suite);
  j["per_case_timeout_s"] = job.per_case_timeout_s;
  if (job.stdio_exact) j["stdio_compare"] = "exact";
  return j.dump() + "\n";
}

ExecutionJob decode_job(std::string_view line) {
  json j;
  try {
    j = json::parse(text::trim(line));
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("job frame is not JSON: ") + e.what());
  }
  try {
    ExecutionJob job;
    job.job_id = j.at("job_id").get<std::string>();
    job.candidate_source = j.at("candidate_source").get<std::string>();
    job.suite.mode = parse_suite_mode(j.at("mode").get<std::string>());
    if (!j.at("setup_code").is_null()) job.suite.setup_code = j.at("setup_code").get<std::string>();
    for (const auto& c : j.at("cases")) {
      if (c.is_string()) {
        job.suite.cases.emplace_back(c.get<std::string>());
      } else {
        job.suite.cases.emplace_back(StdioCase{c.at("stdin_text").get<std::string>(),
                                               c.at("expected_stdout").get<std::string>()});
      }
    }
    job.per_case_timeout_s = j.at("per_case_timeout_s").get<double>();
    job.total_timeout_s = std::max(job.total_timeout_s, job.per_case_timeout_s);
    job.stdio_exact = j.value("stdio_compare", std::string("trim")) == "exact";
    return job;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed job frame: ") + e.what());
  } catch (const SchemaError& e) {
    throw ProtocolError(e.what());
  }
}

std::string encode_result(const ExecutionResult& result) {
  ordered_json j;
  j["job_id"] = result.job_id;
  j["per_case"] = ordered_json::array();
  for (auto c : result.per_case) j["per_case"].push_back(to_string(c));
  j["stderr_excerpt"] = text::truncate_with_marker(result.stderr_excerpt, kStderrCap);
  return j.dump() + "\n";
}

ExecutionResult decode_result(std::string_view line) {
  json j;
  try {
    j = json::parse(text::trim(line));
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("result frame is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("result frame is not an object");
  if (!j.contains("job_id") || !j["job_id"].is_string()) {
    throw ProtocolError("result frame missing job_id");
  }
  if (!j.contains("per_case") || !j["per_case"].is_array()) {
    throw ProtocolError("result frame missing per_case");
  }
  ExecutionResult r;
  r.job_id = j["job_id"].get<std::string>();
  for (const auto& c : j["per_case"]) {
    if (!c.is_string()) throw ProtocolError("per_case entries must be strings");
    r.per_case.push_back(parse_case(c.get<std::string>()));
  }
  if (auto it = j.find("stderr_excerpt"); it != j.end()) {
    if (!it->is_string()) throw ProtocolError("stderr_excerpt must be a string");
    r.stderr_excerpt = text::truncate_with_marker(it->get<std::string>(), kStderrCap);
  }
  r.aggregate = aggregate_verdict(r.per_case);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::once_flag g_ignore_sigpipe;

struct Pipe {
  int read_fd = -1;
  int write_fd = -1;
};

Pipe make_pipe() {
  int fds[2];
  if (pipe2(fds, O_CLOEXEC) != 0) throw SandboxFailure(std::string("pipe: ") + std::strerror(errno));
  return {fds[0], fds[1]};
}

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

void set_nonblocking(int fd) { fcntl(fd, F_SETFL, fcntl(fd, F_GETFL) | O_NONBLOCK); }

std::filesystem::path make_temp_dir() {
  auto pattern = (std::filesystem::temp_directory_path() / "agentfuzz-job-XXXXXX").string();
  if (mkdtemp(pattern.data()) == nullptr) {
    throw SandboxFailure(std::string("mkdtemp: ") + std::strerror(errno));
  }
  return pattern;
}

ExecutionResult failed_result(const ExecutionJob& job, Verdict verdict, CaseOutcome fill,
                              std::string detail) {
  ExecutionResult r;
  r.job_id = job.job_id;
  r.per_case.assign(job.suite.cases.size(), fill);
  r.aggregate = verdict;
  r.stderr_excerpt = text::truncate_with_marker(std::move(detail), kStderrCap);
  return r;
}

}  // namespace

ProcessSandbox::ProcessSandbox(SandboxConfig config)
    : config_(std::move(config)), slots_(std::max(1, config_.max_concurrent)) {
  if (config_.runner_command.empty()) throw ContractError("sandbox runner command is empty");
  if (config_.max_concurrent < 1 || config_.max_concurrent > 1024) {
    throw ContractError("max_concurrent must be in [1, 1024]");
  }
  std::call_once(g_ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });
}

ExecutionResult ProcessSandbox::evaluate(const ExecutionJob& job) {
  job.validate();
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};

  const std::string frame = encode_job(job);
  const auto workdir = make_temp_dir();
  struct Cleanup {
    std::filesystem::path dir;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  } cleanup{workdir};

  // argv must be built before fork; the child only makes async-signal-safe calls.
  std::vector<std::string> args = config_.runner_command;
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  const std::string dir = workdir.string();
  const rlim_t mem_bytes = static_cast<rlim_t>(job.memory_cap_mb) * 1024 * 1024;

  Pipe in = make_pipe(), out = make_pipe(), err = make_pipe();
  const auto started = std::chrono::steady_clock::now();
  const pid_t pid = fork();
  if (pid < 0) {
    close_fd(in.read_fd); close_fd(in.write_fd);
    close_fd(out.read_fd); close_fd(out.write_fd);
    close_fd(err.read_fd); close_fd(err.write_fd);
    return failed_result(job, Verdict::SandboxError, CaseOutcome::Error, "fork failed");
  }
  if (pid == 0) {
    setpgid(0, 0);
    struct rlimit lim{mem_bytes, mem_bytes};
    setrlimit(RLIMIT_AS, &lim);
    if (chdir(dir.c_str()) != 0) _exit(126);
    dup2(in.read_fd, STDIN_FILENO);
    dup2(out.write_fd, STDOUT_FILENO);
    dup2(err.write_fd, STDERR_FILENO);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  setpgid(pid, pid);
  close_fd(in.read_fd);
  close_fd(out.write_fd);
  close_fd(err.write_fd);
  set_nonblocking(in.write_fd);
  set_nonblocking(out.read_fd);
  set_nonblocking(err.read_fd);

  const auto deadline =
      started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(job.total_timeout_s));
  std::string stdout_buf, stderr_buf;
  std::size_t written = 0;
  bool timed_out = false;

  auto remaining_ms = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               deadline - std::chrono::steady_clock::now())
        .count();
  };

  while (out.read_fd >= 0 || err.read_fd >= 0 || in.write_fd >= 0) {
    const auto left = remaining_ms();
    if (left <= 0) {
      timed_out = true;
      break;
    }
    pollfd fds[3];
    int nfds = 0;
    int idx_in = -1, idx_out = -1, idx_err = -1;
    if (in.write_fd >= 0) { idx_in = nfds; fds[nfds++] = {in.write_fd, POLLOUT, 0}; }
    if (out.read_fd >= 0) { idx_out = nfds; fds[nfds++] = {out.read_fd, POLLIN, 0}; }
    if (err.read_fd >= 0) { idx_err = nfds; fds[nfds++] = {err.read_fd, POLLIN, 0}; }
    const int rc = poll(fds, nfds, static_cast<int>(std::min<long long>(left, 200)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (idx_in >= 0 && fds[idx_in].revents != 0) {
      if (fds[idx_in].revents & (POLLERR | POLLHUP)) {
        close_fd(in.write_fd);
      } else {
        const ssize_t n = ::write(in.write_fd, frame.data() + written, frame.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if ((n < 0 && errno != EAGAIN) || written == frame.size()) close_fd(in.write_fd);
      }
    }
    auto drain = [](int& fd, std::string& buf, std::size_t cap) {
      char chunk[8192];
      for (;;) {
        const ssize_t n = ::read(fd, chunk, sizeof chunk);
        if (n > 0) {
          if (buf.size() < cap) buf.append(chunk, std::min<std::size_t>(n, cap - buf.size()));
          continue;
        }
        if (n == 0 || errno != EAGAIN) close_fd(fd);
        return;
      }
    };
    if (idx_out >= 0 && fds[idx_out].revents != 0) drain(out.read_fd, stdout_buf, kStdoutCap);
    if (idx_err >= 0 && fds[idx_err].revents != 0) drain(err.read_fd, stderr_buf, kHostStderrCap);
  }

  int status = 0;
  bool reaped = false;
  while (!timed_out && !reaped) {
    const pid_t w = waitpid(pid, &status, WNOHANG);
    if (w == pid) {
      reaped = true;
    } else if (remaining_ms() <= 0) {
      timed_out = true;
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  if (timed_out) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);
    waitpid(pid, &status, 0);
  } else {
    // Reap any stragglers the runner left in its group.
    kill(-pid, SIGKILL);
  }
  close_fd(in.write_fd);
  close_fd(out.read_fd);
  close_fd(err.read_fd);

  if (timed_out) {
    return failed_result(job, Verdict::Timeout, CaseOutcome::Timeout,
                         "runner exceeded total_timeout_s\n" + stderr_buf);
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const std::string why = WIFEXITED(status)
                                ? "runner exited with status " + std::to_string(WEXITSTATUS(status))
                                : "runner killed by signal " + std::to_string(WTERMSIG(status));
    return failed_result(job, Verdict::SandboxError, CaseOutcome::Error, why + "\n" + stderr_buf);
  }

  const auto body = text::trim(stdout_buf);
  if (body.empty() || body.find('\n') != std::string_view::npos) {
    return failed_result(job, Verdict::SandboxError, CaseOutcome::Error,
                         "runner must print exactly one line\n" + stderr_buf);
  }
  try {
    auto result = decode_result(body);
    if (result.job_id != job.job_id) throw ProtocolError("result job_id does not match job");
    if (result.per_case.size() != job.suite.cases.size()) {
      throw ProtocolError("per_case length does not match case count");
    }
    return result;
  } catch (const ProtocolError& e) {
    return failed_result(job, Verdict::SandboxError, CaseOutcome::Error,
                         std::string(e.what()) + "\n" + stderr_buf);
  }
}

SandboxEvaluator::SandboxEvaluator(std::shared_ptr<ProcessSandbox> sandbox)
    : sandbox_(std::move(sandbox)) {}

EvaluationOutcome SandboxEvaluator::evaluate(const CodeCandidate& code, const TestSuite& suite) {
  ExecutionJob job;
  job.job_id = "job-" + std::to_string(getpid()) + "-" + std::to_string(next_id_++);
  job.candidate_source = code.source;
  job.suite = suite;
  const auto& cfg = sandbox_->config();
  job.per_case_timeout_s = cfg.per_case_timeout_s;
  job.total_timeout_s = std::max(cfg.total_timeout_s, cfg.per_case_timeout_s);
  job.memory_cap_mb = cfg.memory_cap_mb;
  job.stdio_exact = cfg.stdio_exact;
  const auto result = sandbox_->evaluate(job);
  return {result.aggregate, result.stderr_excerpt};
}

}  // namespace agentfuzz
