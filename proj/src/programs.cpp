#include "packmp/programs.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "packmp/msgbuf.hpp"
#include "packmp/slave.hpp"

namespace packmp {

namespace {

std::string prefix(const Spmd& w) { return "rank " + std::to_string(w.myid()) + ": "; }

int arg_int(std::span<const std::string> args, std::size_t i, int fallback) {
  if (i >= args.size()) return fallback;
  std::size_t used = 0;
  int v = std::stoi(args[i], &used);
  if (used != args[i].size() || v < 0) throw std::invalid_argument("expected a count, got '" + args[i] + "'");
  return v;
}

const std::string& required_arg(std::span<const std::string> args, std::size_t i, const char* what) {
  if (i >= args.size()) throw std::invalid_argument(std::string("missing argument: ") + what);
  return args[i];
}

int ping(Spmd& w, std::span<const std::string>, std::ostream& out) {
  Context& ctx = w.transport();
  MsgBuf buf(ctx);
  if (w.myid() == 0) {
    for (int r = 1; r < w.nprocs(); ++r) {
      buf.reset();
      buf << static_cast<std::int32_t>(r) << std::string("ping") << send(r);
      std::int32_t echoed;
      std::string word;
      buf.get(r) >> echoed >> word;
      out << prefix(w) << word << ' ' << echoed << " from rank " << *buf.last_source() << '\n';
    }
  } else {
    std::int32_t n;
    std::string word;
    buf.get(0) >> n >> word;
    out << prefix(w) << word << ' ' << n << '\n';
    buf.reset();
    buf << n * 10 << std::string("pong") << send(0);
  }
  ctx.barrier(ctx.world());
  out << prefix(w) << "done\n";
  return 0;
}

int idiom(Spmd& w, std::span<const std::string>, std::ostream& out) {
  MsgBuf buf(w.transport());
  std::int32_t a = 0;
  double b = 0;
  std::string c;
  if (w.nprocs() > 1) {
    if (w.myid() == 0) {
      buf << std::int32_t{42} << 2.5 << std::string("point to point") << send(1);
    } else if (w.myid() == 1) {
      buf.get() >> a >> b >> c;
      out << prefix(w) << "got " << a << ' ' << b << " '" << c << "'\n";
    }
  }
  if (w.myid() == 0) buf << std::int32_t{-7} << 0.125 << std::string("broadcast");
  buf << bcast(0) >> a >> b >> c;
  out << prefix(w) << "bcast " << a << ' ' << b << " '" << c << "'\n";
  return 0;
}

// Rank 0 fails inside the scope; its peers are released by the disconnect.
int unwind(Spmd& w, std::span<const std::string> args, std::ostream& out) {
  const std::string marker = required_arg(args, 0, "marker path");
  Context& ctx = w.transport();
  if (w.myid() == 0) {
    ctx.on_finalize([marker] { std::ofstream(marker) << "finalized\n"; });
    out << prefix(w) << "raising\n";
    throw std::runtime_error("deliberate failure on rank 0");
  }
  try {
    MsgBuf(ctx).get(0);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::disconnected) throw;
    out << prefix(w) << "released\n";
    return 0;
  }
  return 2;
}

int hard_abort(Spmd& w, std::span<const std::string> args, std::ostream& out) {
  const std::string marker = required_arg(args, 0, "marker path");
  Context& ctx = w.transport();
  if (ctx.backend() == Backend::in_process) throw std::invalid_argument("abort needs the process backend");
  if (w.myid() == 0) {
    ctx.on_finalize([marker] { std::ofstream(marker) << "finalized\n"; });
    out.flush();
    std::abort();
  }
  try {
    MsgBuf(ctx).get(0);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::disconnected) throw;
    out << prefix(w) << "released\n";
    return 0;
  }
  return 2;
}

std::int64_t farm_result(std::int32_t x) { return std::int64_t{x} * x + 1; }

int farm(Spmd& w, std::span<const std::string> args, std::ostream& out) {
  const int jobs = arg_int(args, 0, 20);
  const int ms = arg_int(args, 1, 10);
  HandlerTable table;
  table.add("work", [](MsgBuf& in) {
    std::int32_t x;
    std::uint32_t sleep_ms;
    in >> x >> sleep_ms;
    std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
    in.reset() << x << farm_result(x);
  });

  Context& ctx = w.transport();
  if (w.myid() != 0) {
    slave_loop(ctx, table);
    out << prefix(w) << "stopped\n";
    return 0;
  }

  std::vector<Bytes> list;
  for (int i = 0; i < jobs; ++i) {
    Buffer job(ctx.encoding());
    job << static_cast<std::int32_t>(i) << static_cast<std::uint32_t>(ms);
    list.push_back(job.release());
  }
  int mismatches = 0;
  {
    Master master(ctx, table);
    auto replies = master.run_joblist("work", list);
    for (int i = 0; i < jobs; ++i) {
      std::int32_t x;
      std::int64_t y;
      replies[static_cast<std::size_t>(i)] >> x >> y;
      if (x != i || y != farm_result(i)) ++mismatches;
    }
  }
  out << prefix(w) << jobs << " jobs on " << w.nprocs() - 1 << " slaves, " << mismatches << " mismatches\n";
  return mismatches == 0 ? 0 : 4;
}

const std::map<std::string, Program, std::less<>>& registry() {
  static const std::map<std::string, Program, std::less<>> programs{
      {"ping", ping}, {"idiom", idiom}, {"unwind", unwind}, {"abort", hard_abort}, {"farm", farm}};
  return programs;
}

int run_scoped(const WorldConfig& config, const Program& program, std::span<const std::string> args,
               std::ostream& out, std::ostream& err) {
  int rank = config.rank.value_or(0);
  try {
    Spmd world(config);
    rank = world.myid();
    return program(world, args, out);
  } catch (const std::exception& e) {
    std::ostringstream line;
    line << "rank " << rank << ": " << e.what() << '\n';
    err << line.str() << std::flush;
    return 1;
  }
}

const Program& lookup(std::string_view name) {
  const Program* p = find_program(name);
  if (!p) throw Error(ErrorCode::invalid_argument, "no built-in program '" + std::string(name) + "'");
  return *p;
}

}  // namespace

const Program* find_program(std::string_view name) {
  auto it = registry().find(name);
  return it == registry().end() ? nullptr : &it->second;
}

std::vector<std::string> program_names() {
  std::vector<std::string> names;
  for (const auto& [name, p] : registry()) names.push_back(name);
  return names;
}

int run_rank(std::string_view name, std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  return run_scoped(WorldConfig::from_environment(), lookup(name), args, out, err);
}

int run_rank(const std::shared_ptr<InProcessWorld>& world, int rank, std::string_view name,
             std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  WorldConfig config;
  config.nprocs = world->size();
  config.encoding = world->encoding();
  config.world = world;
  config.rank = rank;
  return run_scoped(config, lookup(name), args, out, err);
}

}  // namespace packmp
