#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <map>
#include <random>
#include <thread>

#include "packmp/coordinator.hpp"
#include "packmp/transport.hpp"
#include "support/expect.hpp"
#include "support/mesh.hpp"
#include "support/ranks.hpp"
#include "transport/internal.hpp"
#include "transport/wire.hpp"

using namespace packmp;
using packmp::testing::code_of;
using packmp::testing::mesh_world;
using packmp::testing::run_ranks;
using packmp::testing::run_threads;
using namespace std::chrono_literals;

namespace {

Bytes B(std::initializer_list<int> xs) {
  Bytes out;
  for (int x : xs) out.push_back(static_cast<std::uint8_t>(x));
  return out;
}

Bytes random_bytes(std::mt19937& rng, std::size_t max_len) {
  Bytes out(std::uniform_int_distribution<std::size_t>(0, max_len)(rng));
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

// Ranks of a world built from an explicit InProcessWorld, so tests can
// look at the mailboxes.
std::vector<std::unique_ptr<Context>> shared_world(const std::shared_ptr<InProcessWorld>& world) {
  std::vector<std::unique_ptr<Context>> out;
  for (int r = 0; r < world->size(); ++r) {
    WorldConfig c;
    c.nprocs = world->size();
    c.world = world;
    c.rank = r;
    out.push_back(init(c));
  }
  return out;
}

}  // namespace

TEST_CASE("transport: init examples") {
  auto one = init_in_process(1);
  REQUIRE(one.size() == 1);
  CHECK(one[0]->rank() == 0);
  CHECK(one[0]->size() == 1);

  auto four = init_in_process(4);
  for (int r = 0; r < 4; ++r) {
    CHECK(four[static_cast<std::size_t>(r)]->rank() == r);
    CHECK(four[static_cast<std::size_t>(r)]->size() == 4);
    CHECK(four[static_cast<std::size_t>(r)]->world().size() == 4);
    CHECK(four[static_cast<std::size_t>(r)]->world().id() == 0);
  }

  // Process-wide once rule: a private world counts as this process's init.
  auto first = init(WorldConfig{});
  CHECK(first->rank() == 0);
  CHECK(code_of([] { init(WorldConfig{}); }) == ErrorCode::already_initialized);
  WorldConfig mesh;
  mesh.backend = Backend::socket_mesh;
  mesh.rank = 0;
  mesh.coordinator = "127.0.0.1:1";
  CHECK(code_of([&] { init(mesh); }) == ErrorCode::already_initialized);

  // Shared worlds apply the rule per slot.
  auto world = InProcessWorld::create(2);
  WorldConfig c;
  c.nprocs = 2;
  c.world = world;
  c.rank = 1;
  auto slot = init(c);
  CHECK(slot->rank() == 1);
  CHECK(code_of([&] { init(c); }) == ErrorCode::already_initialized);
  c.rank = 2;
  CHECK(code_of([&] { init(c); }) == ErrorCode::invalid_argument);

  WorldConfig bad;
  bad.nprocs = 3;
  CHECK(code_of([&] { init(bad); }) == ErrorCode::invalid_argument);
}

TEST_CASE("transport: point-to-point examples") {
  auto ctx = init_in_process(3);
  Context& a = *ctx[0];
  Context& b = *ctx[1];

  a.send(a.world(), 1, 0, B({1, 2, 3, 4}));
  Message m = b.recv(b.world());
  CHECK(m.source == 0);
  CHECK(m.tag == 0);
  CHECK(m.payload == B({1, 2, 3, 4}));

  a.send(a.world(), 1, 5, B({1}));
  a.send(a.world(), 1, 5, B({2}));
  CHECK(b.recv(b.world(), 0, 5).payload == B({1}));
  CHECK(b.recv(b.world(), 0, 5).payload == B({2}));

  CHECK(code_of([&] { a.send(a.world(), 0, 0, B({})); }) == ErrorCode::self_send);
  CHECK(code_of([&] { a.send(a.world(), 3, 0, B({})); }) == ErrorCode::invalid_rank);
  CHECK(code_of([&] { a.send(a.world(), -1, 0, B({})); }) == ErrorCode::invalid_rank);
  CHECK(code_of([&] { b.recv(b.world(), 7); }) == ErrorCode::invalid_rank);

  // Empty and large payloads are delivered whole.
  Bytes big(1 << 20, 0xAB);
  a.send(a.world(), 2, 1, big);
  a.send(a.world(), 2, 1, B({}));
  CHECK(ctx[2]->recv(ctx[2]->world()).payload == big);
  CHECK(ctx[2]->recv(ctx[2]->world()).payload.empty());
}

TEST_CASE("transport: any-source receive returns every pending message") {
  auto ctx = init_in_process(3);
  ctx[1]->send(ctx[1]->world(), 0, 0, B({1}));
  ctx[2]->send(ctx[2]->world(), 0, 0, B({2}));
  std::multiset<int> sources;
  for (int i = 0; i < 2; ++i) {
    Message m = ctx[0]->recv(ctx[0]->world());
    CHECK(m.payload == B({m.source}));
    sources.insert(m.source);
  }
  CHECK(sources == std::multiset<int>{1, 2});
  CHECK_FALSE(ctx[0]->try_recv(ctx[0]->world()).has_value());
}

TEST_CASE("transport: tag filter skips and leaves other tags queued") {
  auto ctx = init_in_process(2);
  Context& a = *ctx[0];
  Context& b = *ctx[1];
  a.send(a.world(), 1, 3, B({3}));

  std::atomic<bool> got7{false};
  std::thread receiver([&] {
    Message m = b.recv(b.world(), any_source, 7);
    CHECK(m.tag == 7);
    CHECK(m.payload == B({7}));
    got7 = true;
  });
  std::this_thread::sleep_for(50ms);
  CHECK_FALSE(got7.load());
  a.send(a.world(), 1, 7, B({7}));
  receiver.join();
  CHECK(got7.load());

  auto left = b.try_recv(b.world());
  REQUIRE(left.has_value());
  CHECK(left->tag == 3);
}

TEST_CASE("transport: matching agrees with a queue simulation") {
  // Oracle: one arrival-ordered queue per receiver; a receive takes the
  // first entry whose source and tag pass the filter.
  struct Sent {
    int src;
    std::uint32_t tag;
    Bytes payload;
  };
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    auto ctx = init_in_process(4);
    std::deque<Sent> oracle;
    const int sends = std::uniform_int_distribution<int>(0, 30)(rng);
    for (int i = 0; i < sends; ++i) {
      int src = std::uniform_int_distribution<int>(1, 3)(rng);
      auto tag = static_cast<std::uint32_t>(std::uniform_int_distribution<int>(0, 3)(rng));
      Bytes p = random_bytes(rng, 6);
      ctx[static_cast<std::size_t>(src)]->send(ctx[static_cast<std::size_t>(src)]->world(), 0, tag, p);
      oracle.push_back({src, tag, p});
    }
    Context& rx = *ctx[0];
    for (int i = 0; i < 60; ++i) {
      std::optional<int> src;
      std::optional<std::uint32_t> tag;
      if (rng() % 2) src = std::uniform_int_distribution<int>(1, 3)(rng);
      if (rng() % 2) tag = static_cast<std::uint32_t>(std::uniform_int_distribution<int>(0, 3)(rng));
      auto expect = std::find_if(oracle.begin(), oracle.end(), [&](const Sent& s) {
        return (!src || s.src == *src) && (!tag || s.tag == *tag);
      });
      auto got = rx.try_recv(rx.world(), src, tag);
      if (expect == oracle.end()) {
        CHECK_FALSE(got.has_value());
        continue;
      }
      REQUIRE(got.has_value());
      CHECK(got->source == expect->src);
      CHECK(got->tag == expect->tag);
      CHECK(got->payload == expect->payload);
      oracle.erase(expect);
    }
  }
}

TEST_CASE("transport: randomized schedules deliver exactly once in FIFO order") {
  std::mt19937 seeds(99);
  for (int trial = 0; trial < 20; ++trial) {
    const unsigned seed = seeds();
    const int n = 4;
    // counts[s][d]: messages s sends to d, known to every rank.
    std::vector<std::vector<int>> counts(n, std::vector<int>(n, 0));
    std::mt19937 plan(seed);
    for (int s = 0; s < n; ++s)
      for (int d = 0; d < n; ++d)
        if (s != d) counts[s][d] = std::uniform_int_distribution<int>(0, 25)(plan);

    auto ctx = init_in_process(n);
    run_ranks(ctx, [&](Context& c) {
      std::mt19937 rng(seed + static_cast<unsigned>(c.rank()));
      std::vector<int> next(n, 0);
      int to_send = 0;
      for (int d = 0; d < n; ++d) to_send += counts[c.rank()][d];
      int to_recv = 0;
      for (int s = 0; s < n; ++s) to_recv += counts[s][c.rank()];
      std::vector<int> expected_seq(n, 0);
      while (to_send > 0 || to_recv > 0) {
        bool do_send = to_send > 0 && (to_recv == 0 || rng() % 2);
        if (do_send) {
          int d;
          do d = static_cast<int>(rng() % n);
          while (next[d] >= counts[c.rank()][d]);
          Bytes p(4);
          detail::store_be32(p.data(), static_cast<std::uint32_t>(next[d]++));
          c.send(c.world(), d, static_cast<std::uint32_t>(c.rank()), p);
          --to_send;
        } else {
          // Only block once nothing is left to send, or ranks could wait on
          // each other forever.
          auto got = c.try_recv(c.world());
          if (!got && to_send > 0) continue;
          Message m = got ? std::move(*got) : c.recv(c.world());
          REQUIRE(m.tag == static_cast<std::uint32_t>(m.source));
          REQUIRE(detail::load_be32(m.payload.data()) == static_cast<std::uint32_t>(expected_seq[m.source]++));
          --to_recv;
        }
      }
      for (int s = 0; s < n; ++s) REQUIRE(expected_seq[s] == counts[s][c.rank()]);
    });
    for (auto& c : ctx) CHECK_FALSE(c->try_recv(c->world()).has_value());
  }
}

TEST_CASE("transport: barrier") {
  auto solo = init_in_process(1);
  solo[0]->barrier(solo[0]->world());

  auto ctx = init_in_process(3);
  std::atomic<long long> delayed_entry{0};
  std::vector<long long> returned(3);
  auto now_us = [] {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
  run_ranks(ctx, [&](Context& c) {
    if (c.rank() == 2) {
      std::this_thread::sleep_for(100ms);
      delayed_entry = now_us();
    }
    c.barrier(c.world());
    returned[static_cast<std::size_t>(c.rank())] = now_us();
  });
  for (long long t : returned) CHECK(t >= delayed_entry.load());

  ctx[0]->finalize();
  CHECK(code_of([&] { ctx[0]->barrier(ctx[0]->world()); }) == ErrorCode::finalized);
}

TEST_CASE("transport: collective examples") {
  auto solo = init_in_process(1);
  Context& s = *solo[0];
  CHECK(s.broadcast(s.world(), 0, B({9})) == B({9}));
  CHECK(s.gather(s.world(), 0, B({1})) == std::vector<Bytes>{B({1})});
  std::vector<Bytes> one{B({0xFF})};
  CHECK(s.scatter(s.world(), 0, one) == B({0xFF}));

  auto ctx = init_in_process(4);
  run_ranks(ctx, [](Context& c) {
    Bytes got = c.broadcast(c.world(), 0, c.rank() == 0 ? B({0xAA, 0xBB}) : B({}));
    CHECK(got == B({0xAA, 0xBB}));
  });

  auto three = init_in_process(3);
  run_ranks(three, [](Context& c) {
    auto all = c.gather(c.world(), 0, B({c.rank()}));
    if (c.rank() == 0) {
      CHECK(all == std::vector<Bytes>{B({0}), B({1}), B({2})});
    } else {
      CHECK(all.empty());
    }
    // Empty payloads still produce one entry per member.
    auto empties = c.gather(c.world(), 1, B({}));
    if (c.rank() == 1) CHECK(empties.size() == 3);

    std::vector<Bytes> segs{B({0xA0}), B({0xA1}), B({0xA2})};
    CHECK(c.scatter(c.world(), 2, segs) == B({0xA0 + c.rank()}));
  });

  auto two = init_in_process(2);
  CHECK(code_of([&] { two[0]->broadcast(two[0]->world(), 2, B({})); }) == ErrorCode::invalid_root);
  CHECK(code_of([&] { two[1]->gather(two[1]->world(), -1, B({})); }) == ErrorCode::invalid_root);
  CHECK(code_of([&] { two[1]->scatter(two[1]->world(), 5, {}); }) == ErrorCode::invalid_root);
}

TEST_CASE("transport: scatter with the wrong segment count") {
  auto ctx = init_in_process(3);
  std::vector<ErrorCode> codes(3);
  run_ranks(ctx, [&](Context& c) {
    std::vector<Bytes> segs{B({1}), B({2})};
    try {
      c.scatter(c.world(), 0, segs);
    } catch (const SegmentCountMismatch& e) {
      CHECK(e.expected() == 3);
      CHECK(e.found() == 2);
      codes[static_cast<std::size_t>(c.rank())] = e.code();
    } catch (const Error& e) {
      codes[static_cast<std::size_t>(c.rank())] = e.code();
    }
  });
  CHECK(codes[0] == ErrorCode::segment_count_mismatch);
  CHECK(codes[1] == ErrorCode::collective_aborted);
  CHECK(codes[2] == ErrorCode::collective_aborted);
  // The world is still usable afterwards.
  run_ranks(ctx, [](Context& c) { CHECK(c.broadcast(c.world(), 1, B({c.rank()})) == B({1})); });
}

TEST_CASE("transport: collectives match the reference for sizes 1 to 5") {
  // Reference: broadcast returns the root payload everywhere, gather lists
  // payloads by rank at the root, scatter hands segment i to rank i.
  for (int n = 1; n <= 5; ++n) {
    auto ctx = init_in_process(n);
    const unsigned seed = 700u + static_cast<unsigned>(n);
    std::atomic<int> violations{0};
    run_ranks(ctx, [&](Context& c) {
      std::mt19937 rng(seed);  // identical stream on every rank
      for (int trial = 0; trial < 200; ++trial) {
        int root = static_cast<int>(rng() % static_cast<unsigned>(n));
        std::vector<Bytes> inputs(static_cast<std::size_t>(n));
        for (auto& in : inputs) in = random_bytes(rng, 40);
        std::vector<Bytes> segments(static_cast<std::size_t>(n));
        for (auto& sg : segments) sg = random_bytes(rng, 40);
        const auto me = static_cast<std::size_t>(c.rank());

        if (c.broadcast(c.world(), root, inputs[me]) != inputs[static_cast<std::size_t>(root)]) ++violations;

        auto g = c.gather(c.world(), root, inputs[me]);
        if (c.rank() == root ? g != inputs : !g.empty()) ++violations;

        std::vector<Bytes> mine = c.rank() == root ? segments : std::vector<Bytes>{};
        if (c.scatter(c.world(), root, mine) != segments[me]) ++violations;
      }
    });
    CHECK(violations.load() == 0);
  }
}

TEST_CASE("transport: comm_create remaps and isolates") {
  auto world = InProcessWorld::create(4);
  auto ctx = shared_world(world);
  std::vector<std::optional<Communicator>> child(4);
  const std::vector<int> subset{3, 1};  // order of the argument does not matter
  run_ranks(ctx, [&](Context& c) { child[static_cast<std::size_t>(c.rank())] = c.comm_create(c.world(), subset); });

  CHECK_FALSE(child[0].has_value());
  CHECK_FALSE(child[2].has_value());
  REQUIRE(child[1].has_value());
  REQUIRE(child[3].has_value());
  CHECK(child[1]->local_rank() == 0);
  CHECK(child[3]->local_rank() == 1);
  CHECK(child[1]->members() == std::vector<int>{1, 3});
  CHECK(child[1]->id() == child[3]->id());
  CHECK(child[1]->id() != 0);

  for (std::size_t r = 0; r < 4; ++r) CHECK(world->mailbox(static_cast<int>(r))->pending() == 0);
  Bytes got;
  run_threads(2, [&](int i) {
    Context& c = *ctx[i == 0 ? 1 : 3];
    const Communicator& comm = *child[i == 0 ? 1 : 3];
    Bytes b = c.broadcast(comm, 0, B({0x42}));
    if (i == 1) got = b;
  });
  CHECK(got == B({0x42}));
  CHECK(world->mailbox(0)->pending() == 0);
  CHECK(world->mailbox(2)->pending() == 0);

  // Point-to-point on the child never matches a world receive.
  ctx[3]->send(*child[3], 0, 0, B({7}));
  CHECK_FALSE(ctx[1]->try_recv(ctx[1]->world()).has_value());
  Message m = ctx[1]->recv(*child[1]);
  CHECK(m.source == 1);
  CHECK(m.payload == B({7}));
  ctx[3]->send(ctx[3]->world(), 1, 0, B({8}));
  CHECK_FALSE(ctx[1]->try_recv(*child[1]).has_value());
  CHECK(ctx[1]->recv(ctx[1]->world()).source == 3);
}

TEST_CASE("transport: comm_create of the whole parent and nested subsets") {
  auto ctx = init_in_process(4);
  std::vector<Communicator> full(4);
  run_ranks(ctx, [&](Context& c) {
    std::vector<int> all{0, 1, 2, 3};
    auto comm = c.comm_create(c.world(), all);
    REQUIRE(comm.has_value());
    CHECK(comm->members() == c.world().members());
    CHECK(comm->local_rank() == c.rank());
    CHECK(comm->id() != c.world().id());
    full[static_cast<std::size_t>(c.rank())] = *comm;

    // A second creation gets a fresh id.
    auto again = c.comm_create(c.world(), all);
    CHECK(again->id() != comm->id());

    // Subset of the child, using child-local ranks.
    std::vector<int> tail{2, 3};
    auto sub = c.comm_create(*comm, tail);
    CHECK(sub.has_value() == (c.rank() >= 2));
    if (sub) {
      CHECK(sub->local_rank() == c.rank() - 2);
      auto g = c.gather(*sub, 1, B({c.rank()}));
      if (sub->local_rank() == 1) CHECK(g == std::vector<Bytes>{B({2}), B({3})});
    }
  });
}

TEST_CASE("transport: comm_create errors") {
  auto ctx = init_in_process(3);
  std::vector<ErrorCode> codes(3);
  run_ranks(ctx, [&](Context& c) {
    codes[static_cast<std::size_t>(c.rank())] = code_of([&] { c.comm_create(c.world(), std::vector<int>{}); });
  });
  for (auto code : codes) CHECK(code == ErrorCode::empty_subset);

  run_ranks(ctx, [&](Context& c) {
    std::vector<int> mine{0, c.rank() == 2 ? 2 : 1};
    codes[static_cast<std::size_t>(c.rank())] = code_of([&] { c.comm_create(c.world(), mine); });
  });
  for (auto code : codes) CHECK(code == ErrorCode::subset_mismatch);

  run_ranks(ctx, [&](Context& c) {
    codes[static_cast<std::size_t>(c.rank())] = code_of([&] { c.comm_create(c.world(), std::vector<int>{0, 5}); });
  });
  for (auto code : codes) CHECK(code == ErrorCode::invalid_rank);

  // Still in step afterwards.
  run_ranks(ctx, [](Context& c) { CHECK(c.comm_create(c.world(), std::vector<int>{1}).has_value() == (c.rank() == 1)); });
}

TEST_CASE("transport: finalize") {
  auto ctx = init_in_process(2);
  int hook_calls = 0;
  ctx[0]->on_finalize([&] { ++hook_calls; });
  ctx[0]->finalize();
  ctx[0]->finalize();
  CHECK(hook_calls == 1);
  CHECK(ctx[0]->finalized());
  CHECK(ctx[0]->finalize_count() == 1);
  CHECK(code_of([&] { ctx[0]->send(ctx[0]->world(), 1, 0, B({})); }) == ErrorCode::finalized);
  CHECK(code_of([&] { ctx[0]->recv(ctx[0]->world()); }) == ErrorCode::finalized);

  // A receive naming a finalized peer reports it instead of hanging.
  CHECK(code_of([&] { ctx[1]->recv(ctx[1]->world(), 0); }) == ErrorCode::disconnected);
  CHECK(code_of([&] { ctx[1]->recv(ctx[1]->world()); }) == ErrorCode::disconnected);

  // Finalize wakes a blocked receive on the same context.
  auto pair = init_in_process(2);
  std::thread waiter([&] { CHECK(code_of([&] { pair[1]->recv(pair[1]->world()); }) == ErrorCode::finalized); });
  std::this_thread::sleep_for(30ms);
  pair[1]->finalize();
  waiter.join();
}

TEST_CASE("transport: messages queued before a peer finalizes are still delivered") {
  auto ctx = init_in_process(2);
  ctx[0]->send(ctx[0]->world(), 1, 0, B({5}));
  ctx[0]->finalize();
  CHECK(ctx[1]->recv(ctx[1]->world(), 0).payload == B({5}));
  CHECK(code_of([&] { ctx[1]->recv(ctx[1]->world(), 0); }) == ErrorCode::disconnected);
}

TEST_CASE("wire: frame header layout") {
  detail::Envelope e;
  e.src = 1;
  e.dest = 2;
  e.comm_id = 0x00010003;
  e.kind = detail::kKindControl;
  e.tag = 7;
  e.payload = B({0xAA, 0xBB});
  auto h = detail::encode_header(e);
  CHECK(to_hex(Bytes(h.begin(), h.end())) ==
        "4d50423101010000000100000002000100030000000700000002");

  detail::Envelope back;
  CHECK(detail::decode_header(h, back) == 2);
  CHECK(back.src == 1);
  CHECK(back.dest == 2);
  CHECK(back.comm_id == 0x00010003);
  CHECK(back.kind == detail::kKindControl);
  CHECK(back.tag == 7);

  auto bad = h;
  bad[0] = 'X';
  CHECK(code_of([&] { detail::decode_header(bad, back); }) == ErrorCode::protocol_error);
  bad = h;
  bad[4] = 2;
  CHECK(code_of([&] { detail::decode_header(bad, back); }) == ErrorCode::protocol_error);
  bad = h;
  bad[5] = 9;
  CHECK(code_of([&] { detail::decode_header(bad, back); }) == ErrorCode::protocol_error);
  bad = h;
  bad[22] = 0x80;
  CHECK(code_of([&] { detail::decode_header(bad, back); }) == ErrorCode::protocol_error);
}

TEST_CASE("wire: rendezvous messages round-trip") {
  detail::Registration r{2, 4, Encoding::portable, "10.0.0.7", 4567};
  auto back = detail::decode_registration(2, detail::encode_registration(r));
  CHECK(back.rank == 2);
  CHECK(back.nprocs == 4);
  CHECK(back.encoding == Encoding::portable);
  CHECK(back.host == "10.0.0.7");
  CHECK(back.port == 4567);

  std::vector<detail::PeerAddress> table{{"a", 1}, {"bb", 2}};
  auto t = detail::decode_table(detail::encode_table(table), 2);
  CHECK(t[1].host == "bb");
  CHECK(t[1].port == 2);
  CHECK(code_of([] { detail::decode_table(detail::encode_table_error(1, "dup"), 2); }) == ErrorCode::rank_conflict);
  CHECK(code_of([] { detail::decode_table(detail::encode_table_error(3, "late"), 2); }) ==
        ErrorCode::rendezvous_timeout);
  CHECK(code_of([] { detail::decode_table(B({0, 0, 0}), 1); }) == ErrorCode::protocol_error);
}

TEST_CASE("socket mesh: point-to-point, collectives and communicators") {
  auto w = mesh_world(3);
  CHECK(w->rendezvous.outcome == Coordinator::Outcome::complete);
  run_ranks(w->ranks, [](Context& c) {
    CHECK(c.size() == 3);
    CHECK(c.backend() == Backend::socket_mesh);
    const Communicator& W = c.world();
    if (c.rank() == 0) {
      c.send(W, 1, 4, B({1, 2}));
      c.send(W, 1, 4, B({3}));
      c.send(W, 2, 9, Bytes(300000, 7));
    } else if (c.rank() == 1) {
      CHECK(c.recv(W, 0, 4).payload == B({1, 2}));
      CHECK(c.recv(W, 0, 4).payload == B({3}));
    } else {
      Message m = c.recv(W);
      CHECK(m.source == 0);
      CHECK(m.tag == 9);
      CHECK(m.payload.size() == 300000);
    }
    c.barrier(W);
    CHECK(c.broadcast(W, 2, B({c.rank()})) == B({2}));
    auto g = c.gather(W, 1, B({c.rank(), c.rank()}));
    if (c.rank() == 1) CHECK(g == std::vector<Bytes>{B({0, 0}), B({1, 1}), B({2, 2})});
    std::vector<Bytes> segs{B({10}), B({11}), B({12})};
    CHECK(c.scatter(W, 0, c.rank() == 0 ? segs : std::vector<Bytes>{}) == B({10 + c.rank()}));

    std::vector<int> sub{0, 2};
    auto child = c.comm_create(W, sub);
    CHECK(child.has_value() == (c.rank() != 1));
    if (child) CHECK(c.broadcast(*child, 1, B({c.rank()})) == B({2}));
    c.barrier(W);
  });
}

TEST_CASE("socket mesh: finalized peer surfaces as disconnected") {
  auto w = mesh_world(2);
  std::thread fin([&] { w->ranks[0]->finalize(); });
  CHECK(code_of([&] { w->ranks[1]->recv(w->ranks[1]->world(), 0); }) == ErrorCode::disconnected);
  w->ranks[1]->finalize();
  fin.join();
  CHECK(w->ranks[0]->finalize_count() == 1);
}

TEST_CASE("socket mesh: portable encoding is carried to every rank") {
  auto w = mesh_world(2, Encoding::portable);
  for (auto& c : w->ranks) CHECK(c->encoding() == Encoding::portable);
}

TEST_CASE("socket mesh: rendezvous failures") {
  auto attempt = [](std::vector<std::pair<int, Encoding>> ranks, int nprocs, std::chrono::milliseconds timeout) {
    Coordinator coord;
    const std::string addr = coord.address();
    Coordinator::Options opt;
    opt.nprocs = nprocs;
    opt.timeout = timeout;
    Coordinator::Result result;
    std::thread server([&] { result = coord.run(opt); });
    std::vector<ErrorCode> codes(ranks.size(), ErrorCode::invalid_argument);
    run_threads(static_cast<int>(ranks.size()), [&](int i) {
      WorldConfig c;
      c.backend = Backend::socket_mesh;
      c.nprocs = nprocs;
      c.rank = ranks[static_cast<std::size_t>(i)].first;
      c.encoding = ranks[static_cast<std::size_t>(i)].second;
      c.coordinator = addr;
      c.timeout = timeout;
      codes[static_cast<std::size_t>(i)] = code_of([&] { detail::init_socket_mesh(c); });
    });
    server.join();
    return std::make_pair(result, codes);
  };

  auto [conflict, conflict_codes] = attempt({{0, Encoding::native}, {0, Encoding::native}}, 2, 3s);
  CHECK(conflict.outcome == Coordinator::Outcome::failed);
  CHECK(conflict.code == ErrorCode::rank_conflict);
  for (auto code : conflict_codes) CHECK(code == ErrorCode::rank_conflict);

  auto [mixed, mixed_codes] = attempt({{0, Encoding::native}, {1, Encoding::portable}}, 2, 3s);
  CHECK(mixed.code == ErrorCode::encoding_mismatch);
  CHECK(std::count(mixed_codes.begin(), mixed_codes.end(), ErrorCode::encoding_mismatch) == 2);

  auto start = std::chrono::steady_clock::now();
  auto [late, late_codes] = attempt({{1, Encoding::native}}, 2, 300ms);
  CHECK(late.code == ErrorCode::rendezvous_timeout);
  CHECK(late_codes[0] == ErrorCode::rendezvous_timeout);
  CHECK(std::chrono::steady_clock::now() - start < 3s);

  // Nobody ever registers: the launcher's abandon callback ends it.
  Coordinator idle;
  Coordinator::Options opt;
  opt.nprocs = 2;
  int polls = 0;
  opt.abandon = [&] { return ++polls > 3; };
  CHECK(idle.run(opt).outcome == Coordinator::Outcome::abandoned);

  WorldConfig nowhere;
  nowhere.backend = Backend::socket_mesh;
  nowhere.nprocs = 2;
  nowhere.rank = 0;
  nowhere.coordinator = "127.0.0.1:1";
  nowhere.timeout = 200ms;
  CHECK(code_of([&] { detail::init_socket_mesh(nowhere); }) == ErrorCode::rendezvous_timeout);
}

TEST_CASE("transport: environment configuration") {
  ::setenv("PACKRUN_RANK", "2", 1);
  ::setenv("PACKRUN_NPROCS", "4", 1);
  ::setenv("PACKRUN_COORD", "127.0.0.1:5000", 1);
  ::setenv("PACKRUN_HETERO", "1", 1);
  auto c = WorldConfig::from_environment();
  CHECK(c.backend == Backend::socket_mesh);
  CHECK(c.rank == 2);
  CHECK(c.nprocs == 4);
  CHECK(c.coordinator == "127.0.0.1:5000");
  CHECK(c.encoding == Encoding::portable);
  ::setenv("PACKRUN_RANK", "x", 1);
  CHECK(code_of([] { WorldConfig::from_environment(); }) == ErrorCode::invalid_argument);
  ::unsetenv("PACKRUN_RANK");
  ::unsetenv("PACKRUN_HETERO");
  CHECK(WorldConfig::from_environment().backend == Backend::in_process);
  ::unsetenv("PACKRUN_NPROCS");
  ::unsetenv("PACKRUN_COORD");
}
