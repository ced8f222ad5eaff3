// packrun: launcher and utility front end.

#include <signal.h>

#include <cerrno>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "packmp/bench.hpp"
#include "packmp/launch.hpp"
#include "packmp/programs.hpp"
#include "packmp/typedesc.hpp"

namespace {

using namespace packmp;

std::string join_codes(const std::vector<int>& codes) {
  std::string s = "[";
  for (std::size_t i = 0; i < codes.size(); ++i) s += (i ? "," : "") + std::to_string(codes[i]);
  return s + "]";
}

int run_mprun(int nprocs, const std::string& backend, double timeout_s, bool hetero,
              const std::vector<std::string>& command) {
  LaunchPlan plan;
  plan.nprocs = nprocs;
  plan.program = command;
  plan.backend = backend == "thread" ? LaunchBackend::thread : LaunchBackend::process;
  plan.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000));
  plan.hetero = hetero;
  plan.out = &std::cout;
  plan.log = &std::cerr;

  LaunchResult result;
  try {
    result = launch(plan);
  } catch (const Error& e) {
    std::cerr << "packrun: " << e.what() << '\n';
    return 127;
  }

  int survivors = 0;
  for (long pid : result.pids)
    if (::kill(static_cast<pid_t>(pid), 0) == 0 || errno != ESRCH) ++survivors;

  std::cerr << "packrun: exit codes " << join_codes(result.exit_codes) << '\n';
  if (!result.pids.empty()) {
    std::cerr << "packrun: pids";
    for (long pid : result.pids) std::cerr << ' ' << pid;
    std::cerr << "\npackrun: survivors " << survivors << '\n';
  }
  if (result.rendezvous_failed) std::cerr << "packrun: rendezvous failed: " << result.diagnostic << '\n';
  return result.status();
}

int run_idlc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << path << ": cannot read file\n";
    return 1;
  }
  std::stringstream text;
  text << in.rdbuf();
  try {
    auto descriptors = parse_idl(text.str());
    TypeRegistry registry;
    for (const auto& d : descriptors) registry.add(d);
    auto issues = registry.validate();
    if (!issues.empty()) {
      for (const auto& issue : issues) std::cerr << path << ": " << issue.message() << '\n';
      return 1;
    }
    std::cout << describe(descriptors);
  } catch (const Error& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_bench(std::size_t size, int reps, bool portable) {
  auto r = bench_pack(size, reps, portable ? Encoding::portable : Encoding::native);
  std::cout << std::fixed << std::setprecision(1);
  std::cout << "payload " << (portable ? "seq<f64> portable" : "seq<u8> native") << ", " << r.size_bytes
            << " bytes, " << r.reps << " reps (medians)\n";
  std::cout << "pack " << r.pack_mb_per_s << " MB/s\n";
  std::cout << "copy " << r.copy_mb_per_s << " MB/s\n";
  std::cout << std::setprecision(3) << "ratio=" << r.ratio << '\n';
  return 0;
}

int run_demo(std::size_t jobs, int workers, int ms) {
  auto t = demo_taskfarm(jobs, workers, std::chrono::milliseconds(ms));
  std::cout << std::fixed << std::setprecision(3);
  std::cout << jobs << " jobs x " << ms << " ms\n";
  std::cout << "1 worker: " << t.serial_seconds << " s\n";
  std::cout << workers << " workers: " << t.parallel_seconds << " s\n";
  if (std::isnan(t.speedup))
    std::cout << "speedup=nan\n";
  else
    std::cout << "speedup=" << t.speedup << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"packrun: launch message-passing worlds and related utilities"};
  app.require_subcommand(1);

  auto* mprun = app.add_subcommand("mprun", "Run PROG as an N-rank world");
  int nprocs = 1;
  std::string backend = "process";
  double timeout_s = 10;
  bool hetero = false;
  std::vector<std::string> command;
  mprun->add_option("-n,--nprocs", nprocs, "Number of ranks")->required()->check(CLI::PositiveNumber);
  mprun->add_option("--backend", backend, "thread or process")->check(CLI::IsMember({"thread", "process"}));
  mprun->add_option("--timeout", timeout_s, "Rendezvous timeout in seconds")->check(CLI::PositiveNumber);
  mprun->add_flag("--hetero", hetero, "Portable encoding for every rank");
  mprun->add_option("command", command, "PROG ARGS... (after --)")->required();

  auto* idlc = app.add_subcommand("idlc", "Parse and validate an IDL file; print its descriptors");
  std::string idl_path;
  idlc->add_option("file", idl_path, "IDL source")->required();

  auto* bench = app.add_subcommand("bench", "Measurements");
  bench->require_subcommand(1);
  auto* bench_pack_cmd = bench->add_subcommand("pack", "Pack throughput against a raw copy");
  std::size_t size = 1 << 20;
  int reps = 100;
  bool portable = false;
  bench_pack_cmd->add_option("--size", size, "Payload bytes")->check(CLI::PositiveNumber);
  bench_pack_cmd->add_option("--reps", reps, "Repetitions")->check(CLI::PositiveNumber);
  bench_pack_cmd->add_flag("--portable", portable, "Portable encoding of seq<f64>");

  auto* demo = app.add_subcommand("demo", "Demonstrations");
  demo->require_subcommand(1);
  auto* taskfarm = demo->add_subcommand("taskfarm", "Task-farm speedup with sleep jobs");
  std::size_t jobs = 20;
  int workers = 4;
  int job_ms = 100;
  taskfarm->add_option("--jobs", jobs, "Number of jobs");
  taskfarm->add_option("--workers", workers, "Worker ranks")->check(CLI::PositiveNumber);
  taskfarm->add_option("--ms", job_ms, "Milliseconds per job")->check(CLI::NonNegativeNumber);

  // Entry point for ranks spawned by mprun for a built-in program.
  auto* rank = app.add_subcommand("rank", "");
  rank->group("");
  std::string program;
  std::vector<std::string> program_args;
  rank->add_option("program", program)->required();
  rank->add_option("args", program_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mprun) return run_mprun(nprocs, backend, timeout_s, hetero, command);
    if (*idlc) return run_idlc(idl_path);
    if (*bench_pack_cmd) return run_bench(size, reps, portable);
    if (*taskfarm) return run_demo(jobs, workers, job_ms);
    if (*rank) {
      if (!find_program(program)) {
        std::cerr << "packrun: no built-in program '" << program << "'\n";
        return 127;
      }
      return run_rank(program, program_args, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "packrun: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
