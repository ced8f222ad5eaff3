#pragma once

// Starts an N-rank world. The process backend spawns one child per rank
// with PACKRUN_RANK/PACKRUN_NPROCS/PACKRUN_COORD set and runs the
// rendezvous coordinator itself; the thread backend runs a built-in
// program (see programs.hpp) on an in-process world.

#include <chrono>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace packmp {

enum class LaunchBackend { thread, process };

struct LaunchPlan {
  int nprocs = 1;
  /// argv. A bare name that matches a built-in program runs that program;
  /// anything else is executed (PATH is searched). Use a path such as
  /// /bin/ping to reach an external command that shadows a built-in.
  std::vector<std::string> program;
  LaunchBackend backend = LaunchBackend::process;
  std::string coordinator_host = "127.0.0.1";
  std::chrono::milliseconds timeout{10000};
  /// Portable encoding world-wide.
  bool hetero = false;
  /// Extra variables for every rank.
  std::map<std::string, std::string> env;
  /// Executable that understands `rank NAME ARGS...`; empty means this one.
  std::string self_exe;
  /// After a rank fails, the rest get this long before SIGKILL.
  std::chrono::milliseconds grace{3000};
  /// Rank standard output, collected and written here in rank order.
  /// Null lets ranks write straight to the inherited stdout.
  std::ostream* out = nullptr;
  /// Launcher log: one "registered rank R" line per registration.
  std::ostream* log = nullptr;
};

struct LaunchResult {
  /// 128+signal for a rank killed by a signal.
  std::vector<int> exit_codes;
  /// Child pids (process backend). All have been reaped on return.
  std::vector<long> pids;
  int registrations = 0;
  bool rendezvous_failed = false;
  std::string diagnostic;

  bool ok() const noexcept;
  /// First nonzero exit code in rank order; 1 for a failed rendezvous
  /// that left every code at 0; otherwise 0.
  int status() const noexcept;
};

/// Throws Error{invalid_argument} for a malformed plan and
/// Error{spawn_failure} ("rank R: reason") when a rank cannot start; ranks
/// already started are killed and reaped first.
LaunchResult launch(const LaunchPlan& plan);

}  // namespace packmp
