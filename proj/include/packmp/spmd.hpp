#pragma once

// Scoped runtime: construct one Spmd at the top of main; its destructor
// finalizes the transport on every exit path, including exceptions.
//
//   int main(int argc, char** argv) {
//     packmp::Spmd world(argc, argv);
//     if (world.myid() == 0) ...
//   }
//
// Only one Spmd may ever be entered per process (per rank slot for a
// shared in-process world), and never during static initialization: a
// global Spmd would finalize after main returns. Keep a global pointer and
// assign it inside main if other code needs to reach the context.
//
// A hard abort (std::abort, fatal signal) skips the destructor, so peers
// only learn about it when the connection drops.

#include <memory>

#include "packmp/transport.hpp"

namespace packmp {

class Spmd {
 public:
  explicit Spmd(const WorldConfig& config);
  /// Reads the world from the environment the launcher sets up.
  Spmd(int argc, char** argv);
  ~Spmd();

  Spmd(const Spmd&) = delete;
  Spmd& operator=(const Spmd&) = delete;

  int myid() const noexcept { return myid_; }
  int nprocs() const noexcept { return nprocs_; }
  bool active() const noexcept { return active_; }
  Context& transport() const noexcept { return *ctx_; }

  /// Finalizes now. Idempotent; the destructor calls it too.
  void exit() noexcept;

 private:
  std::unique_ptr<Context> ctx_;
  int myid_ = 0;
  int nprocs_ = 0;
  bool active_ = false;
};

/// True once static initialization of this library has finished, which in
/// a statically linked program is after the program's own globals.
bool main_started() noexcept;

}  // namespace packmp
