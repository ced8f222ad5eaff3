#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <csignal>
#include <fstream>
#include <random>
#include <thread>

#include "packmp/coordinator.hpp"
#include "packmp/msgbuf.hpp"
#include "packmp/spmd.hpp"
#include "support/expect.hpp"
#include "support/fork.hpp"
#include "support/ranks.hpp"

using namespace packmp;
using packmp::testing::code_of;
using packmp::testing::in_child;
using packmp::testing::start_child;
using packmp::testing::wait_child;
using namespace std::chrono_literals;

namespace {

WorldConfig slot_config(const std::shared_ptr<InProcessWorld>& world, int rank) {
  WorldConfig c;
  c.nprocs = world->size();
  c.world = world;
  c.rank = rank;
  return c;
}

WorldConfig mesh_config(const std::string& coord, int nprocs, int rank) {
  WorldConfig c;
  c.backend = Backend::socket_mesh;
  c.nprocs = nprocs;
  c.rank = rank;
  c.coordinator = coord;
  c.timeout = 5s;
  c.linger = 5s;
  return c;
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

std::string temp_path(const std::string& stem) {
  return "/tmp/packmp_" + stem + "_" + std::to_string(::getpid());
}

}  // namespace

TEST_CASE("spmd: runtime has started by the time tests run") { CHECK(main_started()); }

TEST_CASE("spmd: enter examples") {
  CHECK(in_child([] {
          Spmd world(WorldConfig{});
          if (world.myid() != 0 || world.nprocs() != 1 || !world.active()) return 1;
          if (code_of([] { Spmd again(WorldConfig{}); }) != ErrorCode::already_active) return 2;
          world.exit();
          if (world.active() || world.transport().finalize_count() != 1) return 3;
          if (code_of([] { Spmd later(WorldConfig{}); }) != ErrorCode::already_active) return 4;
          return 0;
        }) == 0);

  // argc/argv form with no launcher environment: a single private rank.
  CHECK(in_child([] {
          char arg0[] = "prog";
          char* argv[] = {arg0, nullptr};
          Spmd world(1, argv);
          return world.nprocs() == 1 && world.transport().backend() == Backend::in_process ? 0 : 1;
        }) == 0);
}

TEST_CASE("spmd: finalize runs during unwinding, before the error escapes") {
  CHECK(in_child([] {
          int finalized_before_catch = -1;
          try {
            Spmd world(WorldConfig{});
            world.transport().on_finalize([&] { finalized_before_catch = 0; });
            throw std::runtime_error("boom");
          } catch (const std::runtime_error&) {
            if (finalized_before_catch == 0) finalized_before_catch = 1;
          }
          return finalized_before_catch == 1 ? 0 : 1;
        }) == 0);

  // Normal scope exit: transport finalized, process exits 0.
  CHECK(in_child([] {
          Context* ctx = nullptr;
          int hooks = 0;
          {
            Spmd world(WorldConfig{});
            ctx = &world.transport();
            ctx->on_finalize([&] { ++hooks; });
          }
          return hooks == 1 ? 0 : 1;
        }) == 0);
}

TEST_CASE("spmd: exactly-once finalize across exit paths") {
  // Per-slot rule for shared worlds lets one process try many paths.
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto world = InProcessWorld::create(1);
    int hooks = 0;
    int path = static_cast<int>(rng() % 5);
    auto body = [&] {
      Spmd s(slot_config(world, 0));
      s.transport().on_finalize([&] { ++hooks; });
      if (path == 1) return;  // early return
      if (path == 2) throw std::runtime_error("unwind");
      if (path == 3) {
        s.exit();
        s.exit();
        throw std::logic_error("after explicit exit");
      }
      if (path == 4) {
        s.exit();
        return;
      }
    };
    try {
      body();
    } catch (const std::exception&) {
    }
    CHECK(hooks == 1);
    CHECK(code_of([&] { Spmd again(slot_config(world, 0)); }) == ErrorCode::already_active);
  }
}

TEST_CASE("spmd: ranks of a shared world get unique ids") {
  auto world = InProcessWorld::create(4);
  std::vector<int> ids;
  packmp::testing::run_threads(4, [&](int r) {
    Spmd s(slot_config(world, r));
    CHECK(s.nprocs() == 4);
    MsgBuf buf(s.transport());
    buf << static_cast<std::int32_t>(s.myid()) << gather(0);
    if (s.myid() == 0) {
      for (int i = 0; i < 4; ++i) {
        std::int32_t id;
        buf >> id;
        ids.push_back(id);
      }
    }
  });
  CHECK(ids == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("spmd: error on one process rank still finalizes, and the peer is released") {
  const std::string marker = temp_path("unwind_marker");
  std::remove(marker.c_str());
  Coordinator coord;
  const std::string addr = coord.address();
  Coordinator::Options opt;
  opt.nprocs = 2;
  opt.timeout = 5s;
  std::thread server([&] { coord.run(opt); });

  auto start = std::chrono::steady_clock::now();
  pid_t r0 = start_child([&] {
    try {
      Spmd world(mesh_config(addr, 2, 0));
      world.transport().on_finalize([&] { std::ofstream(marker) << "finalized\n"; });
      throw std::runtime_error("rank 0 failed mid-scope");
    } catch (const std::runtime_error&) {
      return 3;
    }
  });
  pid_t r1 = start_child([&] {
    Spmd world(mesh_config(addr, 2, 1));
    MsgBuf buf(world.transport());
    try {
      buf.get(0);  // rank 0 never sends
    } catch (const Error& e) {
      return e.code() == ErrorCode::disconnected ? 0 : 2;
    }
    return 1;
  });
  int s0 = wait_child(r0);
  int s1 = wait_child(r1);
  server.join();
  CHECK(s0 == 3);
  CHECK(s1 == 0);
  CHECK(file_exists(marker));
  CHECK(std::chrono::steady_clock::now() - start < 5s);
  std::remove(marker.c_str());
}

TEST_CASE("spmd: hard abort skips finalize") {
  const std::string marker = temp_path("abort_marker");
  std::remove(marker.c_str());
  Coordinator coord;
  const std::string addr = coord.address();
  Coordinator::Options opt;
  opt.nprocs = 2;
  opt.timeout = 5s;
  std::thread server([&] { coord.run(opt); });

  pid_t r0 = start_child([&] {
    Spmd world(mesh_config(addr, 2, 0));
    world.transport().on_finalize([&] { std::ofstream(marker) << "finalized\n"; });
    std::signal(SIGABRT, SIG_DFL);  // bypass the test framework's crash handler
    std::abort();
    return 0;
  });
  pid_t r1 = start_child([&] {
    Spmd world(mesh_config(addr, 2, 1));
    try {
      world.transport().recv(world.transport().world(), 0);
    } catch (const Error& e) {
      return e.code() == ErrorCode::disconnected ? 0 : 2;
    }
    return 1;
  });
  int s0 = wait_child(r0);
  int s1 = wait_child(r1);
  server.join();
  CHECK(s0 == 128 + SIGABRT);
  CHECK(s1 == 0);
  CHECK_FALSE(file_exists(marker));
}
