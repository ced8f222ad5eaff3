#pragma once

// Built-in SPMD programs. Each runs unchanged on a thread world or as one
// OS process per rank, and writes only rank-prefixed, schedule-independent
// lines to `out`, so both backends print the same log.
//
//   ping                 rank 0 pings every other rank and collects replies
//   idiom                pack/send/get and pack/bcast with mixed types
//   unwind MARKER        rank 0 throws mid-scope; finalize writes MARKER
//   abort MARKER         rank 0 aborts; MARKER must stay absent
//   farm [JOBS] [MS]     master/slave job list checked against a serial run

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "packmp/spmd.hpp"

namespace packmp {

using Program = std::function<int(Spmd& world, std::span<const std::string> args, std::ostream& out)>;

const Program* find_program(std::string_view name);
std::vector<std::string> program_names();

/// One rank launched as its own process: enters from the environment.
/// An error escaping the program finalizes first, then yields status 1.
int run_rank(std::string_view name, std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// One rank of a shared thread world.
int run_rank(const std::shared_ptr<InProcessWorld>& world, int rank, std::string_view name,
             std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace packmp
