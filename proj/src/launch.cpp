#include "packmp/launch.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/mman.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <iostream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "packmp/coordinator.hpp"
#include "packmp/error.hpp"
#include "packmp/programs.hpp"

extern char** environ;

namespace packmp {

namespace {

using Clock = std::chrono::steady_clock;

int status_of(int wstatus) {
  if (WIFEXITED(wstatus)) return WEXITSTATUS(wstatus);
  if (WIFSIGNALED(wstatus)) return 128 + WTERMSIG(wstatus);
  return 1;
}

std::string self_path() {
  char buf[4096];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n <= 0) throw Error(ErrorCode::spawn_failure, "cannot resolve the launcher executable");
  return std::string(buf, static_cast<std::size_t>(n));
}

bool is_builtin(const std::string& name) {
  return name.find('/') == std::string::npos && find_program(name) != nullptr;
}

std::vector<std::string> base_environment(const LaunchPlan& plan) {
  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) {
    std::string_view kv(*e);
    if (kv.starts_with("PACKRUN_")) continue;
    std::string key(kv.substr(0, kv.find('=')));
    if (plan.env.count(key)) continue;
    env.emplace_back(kv);
  }
  for (const auto& [k, v] : plan.env) env.push_back(k + "=" + v);
  return env;
}

// Owns the children until each is reaped; kills leftovers on any exit path.
struct Children {
  std::vector<pid_t> pids;
  std::vector<std::optional<int>> codes;
  std::vector<int> outputs;  // memfd per rank, or -1

  ~Children() {
    for (std::size_t i = 0; i < pids.size(); ++i) {
      if (!codes[i]) {
        ::kill(pids[i], SIGKILL);
        int st;
        while (::waitpid(pids[i], &st, 0) < 0 && errno == EINTR) {
        }
      }
    }
    for (int fd : outputs)
      if (fd >= 0) ::close(fd);
  }

  int live() const {
    int n = 0;
    for (const auto& c : codes) n += !c;
    return n;
  }

  void kill_all(int sig) {
    for (std::size_t i = 0; i < pids.size(); ++i)
      if (!codes[i]) ::kill(pids[i], sig);
  }
};

void copy_output(int fd, std::ostream& out) {
  ::lseek(fd, 0, SEEK_SET);
  char buf[65536];
  for (;;) {
    ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    out.write(buf, n);
  }
  out.flush();
}

LaunchResult launch_processes(const LaunchPlan& plan) {
  const int n = plan.nprocs;
  std::vector<std::string> argv = plan.program;
  if (is_builtin(argv[0])) {
    argv.insert(argv.begin(), {plan.self_exe.empty() ? self_path() : plan.self_exe, "rank"});
  }
  std::vector<char*> argp;
  for (auto& a : argv) argp.push_back(a.data());
  argp.push_back(nullptr);

  Coordinator coord(plan.coordinator_host);
  const std::vector<std::string> shared_env = base_environment(plan);

  std::mutex log_mutex;
  std::atomic<bool> any_exited{false};
  std::atomic<bool> reaped_all{false};
  std::atomic<int> registrations{0};

  Children kids;
  kids.codes.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    std::vector<std::string> env = shared_env;
    env.push_back("PACKRUN_RANK=" + std::to_string(r));
    env.push_back("PACKRUN_NPROCS=" + std::to_string(n));
    env.push_back("PACKRUN_COORD=" + coord.address());
    env.push_back("PACKRUN_TIMEOUT_MS=" + std::to_string(plan.timeout.count()));
    if (plan.hetero) env.push_back("PACKRUN_HETERO=1");
    std::vector<char*> envp;
    for (auto& e : env) envp.push_back(e.data());
    envp.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    int out_fd = -1;
    if (plan.out) {
      out_fd = ::memfd_create("packrun-rank", MFD_CLOEXEC);
      if (out_fd < 0) throw Error(ErrorCode::spawn_failure, "rank " + std::to_string(r) + ": memfd_create failed");
      posix_spawn_file_actions_adddup2(&actions, out_fd, STDOUT_FILENO);
    }
    kids.outputs.push_back(out_fd);
    pid_t pid;
    int rc = ::posix_spawnp(&pid, argp[0], &actions, nullptr, argp.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
      kids.codes.resize(kids.pids.size());
      throw Error(ErrorCode::spawn_failure, "rank " + std::to_string(r) + ": " + argv[0] + ": " + std::strerror(rc));
    }
    kids.pids.push_back(pid);
  }

  Coordinator::Options options;
  options.nprocs = n;
  options.encoding = plan.hetero ? Encoding::portable : Encoding::native;
  options.timeout = plan.timeout;
  // A rank gone before the table went out can never complete the world.
  options.abandon = [&] { return any_exited.load() || reaped_all.load(); };
  options.on_register = [&](int rank) {
    ++registrations;
    if (plan.log) {
      std::lock_guard lock(log_mutex);
      *plan.log << "registered rank " << rank << '\n' << std::flush;
    }
  };
  std::optional<Coordinator::Result> rendezvous;
  std::atomic<bool> rendezvous_done{false};
  std::thread server([&] {
    try {
      rendezvous = coord.run(options);
    } catch (const std::exception& e) {
      rendezvous = Coordinator::Result{Coordinator::Outcome::failed, ErrorCode::io_error, e.what()};
    }
    rendezvous_done = true;
  });

  std::optional<Clock::time_point> kill_at;
  bool killed = false;
  while (kids.live() > 0) {
    for (int r = 0; r < n; ++r) {
      auto i = static_cast<std::size_t>(r);
      if (kids.codes[i]) continue;
      int st;
      if (::waitpid(kids.pids[i], &st, WNOHANG) == kids.pids[i]) {
        kids.codes[i] = status_of(st);
        any_exited = true;
        if (*kids.codes[i] != 0 && !kill_at) kill_at = Clock::now() + plan.grace;
      }
    }
    if (rendezvous_done && rendezvous->outcome == Coordinator::Outcome::failed && !kill_at)
      kill_at = Clock::now() + plan.grace;
    if (kill_at && !killed && Clock::now() >= *kill_at) {
      kids.kill_all(SIGKILL);
      killed = true;
    }
    if (kids.live() > 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  reaped_all = true;
  server.join();

  LaunchResult result;
  result.registrations = registrations.load();
  for (int r = 0; r < n; ++r) {
    result.exit_codes.push_back(*kids.codes[static_cast<std::size_t>(r)]);
    result.pids.push_back(kids.pids[static_cast<std::size_t>(r)]);
    if (plan.out) copy_output(kids.outputs[static_cast<std::size_t>(r)], *plan.out);
  }
  if (rendezvous && rendezvous->outcome == Coordinator::Outcome::failed) {
    result.rendezvous_failed = true;
    result.diagnostic = rendezvous->message;
  }
  return result;
}

LaunchResult launch_threads(const LaunchPlan& plan) {
  const std::string& name = plan.program[0];
  if (!find_program(name))
    throw Error(ErrorCode::spawn_failure, "rank 0: '" + name + "' is not a built-in program");
  const std::vector<std::string> args(plan.program.begin() + 1, plan.program.end());
  const int n = plan.nprocs;
  auto world = InProcessWorld::create(n, plan.hetero ? Encoding::portable : Encoding::native);

  std::vector<std::ostringstream> outs(static_cast<std::size_t>(n));
  std::vector<int> codes(static_cast<std::size_t>(n), 1);
  std::mutex err_mutex;
  std::ostringstream errs;
  {
    std::vector<std::jthread> ranks;
    for (int r = 0; r < n; ++r) {
      ranks.emplace_back([&, r] {
        std::ostringstream err;
        codes[static_cast<std::size_t>(r)] = run_rank(world, r, name, args, outs[static_cast<std::size_t>(r)], err);
        std::lock_guard lock(err_mutex);
        errs << err.str();
      });
    }
  }
  if (!errs.str().empty()) std::cerr << errs.str() << std::flush;

  LaunchResult result;
  result.exit_codes = codes;
  result.registrations = n;
  std::ostream& out = plan.out ? *plan.out : std::cout;
  for (auto& o : outs) out << o.str();
  out.flush();
  return result;
}

}  // namespace

bool LaunchResult::ok() const noexcept { return status() == 0; }

int LaunchResult::status() const noexcept {
  for (int c : exit_codes)
    if (c != 0) return c;
  return rendezvous_failed ? 1 : 0;
}

LaunchResult launch(const LaunchPlan& plan) {
  if (plan.nprocs < 1) throw Error(ErrorCode::invalid_argument, "nprocs must be at least 1");
  if (plan.program.empty() || plan.program[0].empty())
    throw Error(ErrorCode::invalid_argument, "no program to launch");
  return plan.backend == LaunchBackend::process ? launch_processes(plan) : launch_threads(plan);
}

}  // namespace packmp
