#include "sensa/adapter.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include "sensa/csv.hpp"
#include "sensa/log.hpp"
#include "sensa/parallel.hpp"

extern char** environ;

namespace sensa {

namespace {

bool is_executable(const std::filesystem::path& p) {
  struct stat st {};
  return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && ::access(p.c_str(), X_OK) == 0;
}

std::optional<std::string> resolve_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) {
    return is_executable(name) ? std::optional<std::string>(name) : std::nullopt;
  }
  const char* path = std::getenv("PATH");
  std::stringstream dirs(path ? path : "/usr/bin:/bin");
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    const auto candidate = std::filesystem::path(dir.empty() ? "." : dir) / name;
    if (is_executable(candidate)) return candidate.string();
  }
  return std::nullopt;
}

struct ChildResult {
  bool timedOut = false;
  int status = 0;  // waitpid status
  std::string out;
  std::string spawnError;
};

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
};

std::vector<char*> child_environment(const std::string& rowTag, std::vector<std::string>& store) {
  static const std::string key = "SENSA_ROW_INDEX=";
  for (char** e = environ; *e != nullptr; ++e) {
    if (std::strncmp(*e, key.c_str(), key.size()) != 0) store.emplace_back(*e);
  }
  store.push_back(key + rowTag);
  std::vector<char*> envp;
  for (auto& s : store) envp.push_back(s.data());
  envp.push_back(nullptr);
  return envp;
}

/// Spawns the child in its own process group, feeds `input` and collects
/// stdout until EOF, exit, or the deadline. stderr passes through.
ChildResult run_child(const std::string& exe, const std::vector<std::string>& command,
                      const std::string& input, double timeoutSec, const std::string& rowTag) {
  ChildResult res;
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) {
    res.spawnError = std::string("pipe: ") + std::strerror(errno);
    return res;
  }
  Fd in_r(in_pipe[0]), in_w(in_pipe[1]), out_r(out_pipe[0]), out_w(out_pipe[1]);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_r.get(), STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_w.get(), STDOUT_FILENO);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGDEF);
  posix_spawnattr_setpgroup(&attr, 0);
  sigset_t defaults;
  sigemptyset(&defaults);
  sigaddset(&defaults, SIGPIPE);
  posix_spawnattr_setsigdefault(&attr, &defaults);

  std::vector<std::string> arg_store(command);
  std::vector<char*> argv;
  for (auto& a : arg_store) argv.push_back(a.data());
  argv.push_back(nullptr);
  std::vector<std::string> env_store;
  auto envp = child_environment(rowTag, env_store);

  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, exe.c_str(), &actions, &attr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  in_r.reset();
  out_w.reset();
  if (rc != 0) {
    res.spawnError = std::string("spawn: ") + std::strerror(rc);
    return res;
  }
  ::fcntl(in_w.get(), F_SETFL, O_NONBLOCK);

  using clock = std::chrono::steady_clock;
  const auto deadline =
      clock::now() + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(timeoutSec));
  std::size_t written = 0;
  if (input.empty()) in_w.reset();
  char buf[4096];
  bool out_open = true;
  while (out_open) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (left.count() <= 0) {
      res.timedOut = true;
      break;
    }
    pollfd fds[2];
    nfds_t nfds = 0;
    fds[nfds++] = {out_r.get(), POLLIN, 0};
    if (in_w.get() >= 0) fds[nfds++] = {in_w.get(), POLLOUT, 0};
    const int n = ::poll(fds, nfds, static_cast<int>(std::min<long long>(left.count() + 1, 1000)));
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t w = ::write(in_w.get(), input.data() + written, input.size() - written);
      if (w > 0) written += static_cast<std::size_t>(w);
      // EPIPE: the child stopped reading; its output decides the outcome.
      if ((w < 0 && errno != EAGAIN) || written == input.size()) in_w.reset();
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t r = ::read(out_r.get(), buf, sizeof buf);
      if (r > 0) {
        res.out.append(buf, static_cast<std::size_t>(r));
      } else if (r == 0 || errno != EAGAIN) {
        out_open = false;
      }
    }
  }
  in_w.reset();
  out_r.reset();
  if (res.timedOut) ::kill(-pid, SIGKILL);
  // stdout closed, so the child is exiting; the deadline still bounds the wait.
  while (true) {
    const pid_t w = ::waitpid(pid, &res.status, res.timedOut ? 0 : WNOHANG);
    if (w == pid || (w < 0 && errno != EINTR)) break;
    if (w == 0) {
      if (clock::now() >= deadline) {
        res.timedOut = true;
        ::kill(-pid, SIGKILL);
        continue;
      }
      ::usleep(1000);
    }
  }
  // Reap stray grandchildren of a timed-out script as well.
  if (res.timedOut) ::kill(-pid, SIGKILL);
  return res;
}

std::string exit_reason(const ChildResult& r, double timeoutSec) {
  if (!r.spawnError.empty()) return r.spawnError;
  if (r.timedOut) return "timed out after " + format_double(timeoutSec) + " s";
  if (WIFSIGNALED(r.status)) return "killed by signal " + std::to_string(WTERMSIG(r.status));
  if (WIFEXITED(r.status) && WEXITSTATUS(r.status) != 0) {
    return "exit status " + std::to_string(WEXITSTATUS(r.status));
  }
  return {};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

/// Parses one data line against the expected width; an empty optional plus
/// a reason on failure.
std::optional<std::vector<double>> parse_row(const std::string& line, std::size_t width,
                                             std::string& reason) {
  const auto fields = split_csv_line(line);
  if (fields.size() != width) {
    reason = "expected " + std::to_string(width) + " output fields, got " +
             std::to_string(fields.size());
    return std::nullopt;
  }
  std::vector<double> v;
  try {
    for (const auto& f : fields) v.push_back(parse_double(f));
  } catch (const Error& e) {
    reason = e.what();
    return std::nullopt;
  }
  for (double x : v) {
    if (!std::isfinite(x)) {
      reason = "non-finite output";
      return std::nullopt;
    }
  }
  return v;
}

std::string row_csv(const DesignMatrix& design, const std::vector<std::size_t>& cols,
                    std::size_t row) {
  std::vector<std::string> fields;
  for (auto c : cols) {
    fields.push_back(format_double(
        design.mapped(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c))));
  }
  return join_csv_line(fields) + '\n';
}

}  // namespace

void validate_spec(const SimulatorSpec& spec, const ParameterSpace& space) {
  require(!spec.command.empty(), ErrorKind::Config, "simulator command is empty");
  require(spec.maxParallel >= 1, ErrorKind::Config, "maxParallel must be >= 1");
  require(spec.timeoutSec > 0.0, ErrorKind::Config, "timeout must be positive");
  require(!spec.outputNames.empty(), ErrorKind::Config, "simulator declares no outputs");
  const std::set<std::string> given(spec.paramOrder.begin(), spec.paramOrder.end());
  const auto names = space.names();
  const std::set<std::string> expected(names.begin(), names.end());
  require(given == expected && given.size() == spec.paramOrder.size(), ErrorKind::Config,
          "simulator paramOrder must list each parameter of the space exactly once");
  require(resolve_executable(spec.command.front()).has_value(), ErrorKind::Setup,
          "simulator executable not found or not executable: " + spec.command.front());
}

BatchReport run_batch_report(const SimulatorSpec& spec, const ParameterSpace& space,
                             const DesignMatrix& design) {
  validate_spec(spec, space);
  require(design.dims() == space.size(), ErrorKind::Structural,
          "design width does not match the parameter space");
  require(design.mapped.allFinite(), ErrorKind::Domain, "design holds non-finite values");
  const std::string exe = *resolve_executable(spec.command.front());
  // A child that exits before reading its input must not take us down.
  ::signal(SIGPIPE, SIG_IGN);

  std::vector<std::size_t> cols;
  for (const auto& name : spec.paramOrder) cols.push_back(*space.index_of(name));
  const std::string header = join_csv_line(spec.paramOrder) + '\n';
  const std::string expected_header = join_csv_line(spec.outputNames);
  const std::size_t n = design.rows(), p = spec.outputNames.size();

  Matrix values = Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p),
                                   std::nan(""));
  std::vector<std::string> reasons(n);

  auto store = [&](std::size_t row, const std::vector<double>& v) {
    for (std::size_t j = 0; j < p; ++j) {
      values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = v[j];
    }
  };

  if (!spec.perBatch) {
    parallel_for(n, spec.maxParallel, [&](std::size_t i) {
      const auto r = run_child(exe, spec.command, header + row_csv(design, cols, i),
                               spec.timeoutSec, std::to_string(i));
      if (auto why = exit_reason(r, spec.timeoutSec); !why.empty()) {
        reasons[i] = why;
        return;
      }
      const auto lines = split_lines(r.out);
      if (lines.size() != 2) {
        reasons[i] = "expected 2 output lines, got " + std::to_string(lines.size());
        return;
      }
      if (lines[0] != expected_header) {
        reasons[i] = "output header '" + lines[0] + "' does not match '" + expected_header + "'";
        return;
      }
      if (auto v = parse_row(lines[1], p, reasons[i])) store(i, *v);
    });
  } else {
    std::string input = header;
    for (std::size_t i = 0; i < n; ++i) input += row_csv(design, cols, i);
    const auto r = run_child(exe, spec.command, input, spec.timeoutSec, "batch");
    std::string whole = exit_reason(r, spec.timeoutSec);
    const auto lines = split_lines(r.out);
    if (whole.empty() && lines.size() != n + 1) {
      whole = "expected " + std::to_string(n + 1) + " output lines, got " +
              std::to_string(lines.size());
    }
    if (whole.empty() && lines[0] != expected_header) {
      whole = "output header '" + lines[0] + "' does not match '" + expected_header + "'";
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!whole.empty()) {
        reasons[i] = whole;
      } else if (auto v = parse_row(lines[i + 1], p, reasons[i])) {
        store(i, *v);
      }
    }
  }

  BatchReport rep;
  rep.outputs.values = std::move(values);
  rep.outputs.names = spec.outputNames;
  rep.outputs.valid.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (reasons[i].empty()) continue;
    rep.outputs.valid[i] = 0;
    rep.failures.push_back({i, reasons[i]});
    log_warning("simulator row " + std::to_string(i) + " failed: " + reasons[i]);
  }
  const double share = n > 0 ? static_cast<double>(rep.failures.size()) / static_cast<double>(n) : 0.0;
  if (n > 0 && share >= spec.maxFailFraction) {
    const auto msg = std::to_string(rep.failures.size()) + " of " + std::to_string(n) +
                     " simulator rows failed";
    throw BatchQualityError(msg, std::move(rep));
  }
  return rep;
}

OutputMatrix run_batch(const SimulatorSpec& spec, const ParameterSpace& space,
                       const DesignMatrix& design) {
  return run_batch_report(spec, space, design).outputs;
}

}  // namespace sensa
