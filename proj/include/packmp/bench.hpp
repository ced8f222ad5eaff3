#pragma once

// Measurements behind `packrun bench` and `packrun demo`.

#include <chrono>
#include <cstddef>

#include "packmp/buffer.hpp"

namespace packmp {

struct PackBench {
  std::size_t size_bytes = 0;
  int reps = 0;
  Encoding encoding = Encoding::native;
  /// Per-rep medians.
  double pack_seconds = 0;
  double copy_seconds = 0;
  double pack_mb_per_s = 0;
  double copy_mb_per_s = 0;
  /// pack time over copy time; 1.0 means as fast as memcpy.
  double ratio = 0;
};

/// Native: a vector<uint8_t> of `size_bytes`. Portable: a vector<double>
/// of the same byte size (at least one element). The baseline copies the
/// same source bytes into a preallocated destination.
PackBench bench_pack(std::size_t size_bytes, int reps, Encoding encoding = Encoding::native);

struct FarmTiming {
  std::size_t jobs = 0;
  int workers = 0;
  double serial_seconds = 0;
  double parallel_seconds = 0;
  /// NaN for zero jobs.
  double speedup = 0;
};

/// Wall time of run_joblist over `jobs` sleep jobs on a thread world with
/// `workers` slaves. Throws if any reply differs from the serial result.
double time_joblist(std::size_t jobs, int workers, std::chrono::milliseconds job_time);

/// One-worker run against a `workers` run.
FarmTiming demo_taskfarm(std::size_t jobs, int workers, std::chrono::milliseconds job_time);

}  // namespace packmp
