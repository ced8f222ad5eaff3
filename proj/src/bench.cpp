#include "packmp/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>
#include <vector>

#include "packmp/msgbuf.hpp"
#include "packmp/slave.hpp"

namespace packmp {

namespace {

using Clock = std::chrono::steady_clock;

// Keeps the optimizer from discarding a result.
void keep(const void* p) { asm volatile("" : : "g"(p) : "memory"); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : (v[mid - 1] + v[mid]) / 2;
}

template <class T>
PackBench measure(const std::vector<T>& src, std::size_t bytes, int reps, Encoding encoding) {
  Buffer buf(encoding);
  buf << src;  // sizes the buffer's capacity once
  std::vector<std::uint8_t> dst(bytes);

  std::vector<double> pack_t, copy_t;
  pack_t.reserve(static_cast<std::size_t>(reps));
  copy_t.reserve(static_cast<std::size_t>(reps));
  // Alternate so drift hits both sides equally.
  for (int i = 0; i < reps; ++i) {
    auto t0 = Clock::now();
    buf.reset();
    buf << src;
    keep(buf.data().data());
    auto t1 = Clock::now();
    std::memcpy(dst.data(), src.data(), bytes);
    keep(dst.data());
    auto t2 = Clock::now();
    pack_t.push_back(std::chrono::duration<double>(t1 - t0).count());
    copy_t.push_back(std::chrono::duration<double>(t2 - t1).count());
  }

  PackBench r;
  r.size_bytes = bytes;
  r.reps = reps;
  r.encoding = encoding;
  r.pack_seconds = median(pack_t);
  r.copy_seconds = median(copy_t);
  // Clock granularity floor for tiny sizes.
  constexpr double tick = 1e-9;
  r.pack_mb_per_s = static_cast<double>(bytes) / std::max(r.pack_seconds, tick) / 1e6;
  r.copy_mb_per_s = static_cast<double>(bytes) / std::max(r.copy_seconds, tick) / 1e6;
  r.ratio = std::max(r.pack_seconds, tick) / std::max(r.copy_seconds, tick);
  return r;
}

std::int64_t job_result(std::uint32_t x) { return std::int64_t{x} * 3 + 7; }

}  // namespace

PackBench bench_pack(std::size_t size_bytes, int reps, Encoding encoding) {
  if (size_bytes < 1) throw Error(ErrorCode::invalid_argument, "size must be at least 1 byte");
  if (reps < 1) throw Error(ErrorCode::invalid_argument, "reps must be at least 1");
  if (encoding == Encoding::native) {
    std::vector<std::uint8_t> src(size_bytes);
    for (std::size_t i = 0; i < size_bytes; ++i) src[i] = static_cast<std::uint8_t>(i * 131u);
    return measure(src, size_bytes, reps, encoding);
  }
  std::vector<double> src(std::max<std::size_t>(1, size_bytes / sizeof(double)));
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = static_cast<double>(i) * 0.5;
  return measure(src, src.size() * sizeof(double), reps, encoding);
}

double time_joblist(std::size_t jobs, int workers, std::chrono::milliseconds job_time) {
  if (workers < 1) throw Error(ErrorCode::invalid_argument, "workers must be at least 1");
  HandlerTable table;
  table.add("sleep", [](MsgBuf& in) {
    std::uint32_t x, ms;
    in >> x >> ms;
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    in.reset() << job_result(x);
  });

  auto ctxs = init_in_process(workers + 1);
  std::vector<Bytes> list;
  for (std::size_t i = 0; i < jobs; ++i) {
    Buffer b;
    b << static_cast<std::uint32_t>(i) << static_cast<std::uint32_t>(job_time.count());
    list.push_back(b.release());
  }

  double seconds = 0;
  std::exception_ptr failure;
  {
    std::vector<std::jthread> ranks;
    for (int r = 0; r <= workers; ++r) {
      ranks.emplace_back([&, r] {
        try {
          Context* ctx = ctxs[static_cast<std::size_t>(r)].get();
          if (r != 0) {
            slave_loop(*ctx, table);
            ctx->finalize();
            return;
          }
          auto t0 = Clock::now();
          {
            Master master(*ctx, table);
            auto replies = master.run_joblist("sleep", list);
            for (std::size_t i = 0; i < jobs; ++i) {
              std::int64_t y;
              replies[i] >> y;
              if (y != job_result(static_cast<std::uint32_t>(i)))
                throw Error(ErrorCode::protocol_error, "job " + std::to_string(i) + " returned a wrong result");
            }
          }
          seconds = std::chrono::duration<double>(Clock::now() - t0).count();
          ctx->finalize();
        } catch (...) {
          ctxs[static_cast<std::size_t>(r)]->finalize();
          if (r == 0) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return seconds;
}

FarmTiming demo_taskfarm(std::size_t jobs, int workers, std::chrono::milliseconds job_time) {
  FarmTiming t;
  t.jobs = jobs;
  t.workers = workers;
  t.serial_seconds = time_joblist(jobs, 1, job_time);
  t.parallel_seconds = time_joblist(jobs, workers, job_time);
  t.speedup = jobs == 0 ? std::numeric_limits<double>::quiet_NaN() : t.serial_seconds / t.parallel_seconds;
  return t;
}

}  // namespace packmp
