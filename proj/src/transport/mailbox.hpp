#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include "packmp/buffer.hpp"

namespace packmp::detail {

inline constexpr std::uint8_t kKindData = 0;
inline constexpr std::uint8_t kKindControl = 1;

struct Envelope {
  int src = 0;
  int dest = 0;
  std::uint32_t comm_id = 0;
  std::uint8_t kind = kKindData;
  std::uint32_t tag = 0;
  Bytes payload;
};

struct Matcher {
  std::uint32_t comm_id;
  std::uint8_t kind;
  std::optional<int> src;          // world rank
  std::optional<std::uint32_t> tag;
  /// World ranks an any-source receive could hear from.
  std::vector<int> candidates;

  bool matches(const Envelope& e) const noexcept {
    return e.comm_id == comm_id && e.kind == kind && (!src || e.src == *src) && (!tag || e.tag == *tag);
  }
};

/// Incoming queue of one rank. Unbounded; matching scans in arrival order,
/// so per-sender FIFO holds for every filter.
class Mailbox {
 public:
  void push(Envelope e);

  /// Blocks for the first match. Throws Error{finalized} once closed and
  /// Error{disconnected} when no sender that could match is still open.
  Envelope take(const Matcher& m);
  std::optional<Envelope> try_take(const Matcher& m);

  /// Wakes every waiter with Error{finalized}.
  void close();

  void peer_closed(int rank);
  bool is_peer_closed(int rank) const;

  /// Waits until every rank in `peers` has closed, or the deadline passes.
  bool wait_peers_closed(const std::vector<int>& peers, std::chrono::steady_clock::time_point deadline);

  std::size_t pending() const;

 private:
  std::optional<Envelope> extract(const Matcher& m);
  bool unreachable(const Matcher& m) const;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Envelope> queue_;
  std::set<int> closed_peers_;
  bool closed_ = false;
};

/// Outgoing side of a backend.
class Link {
 public:
  virtual ~Link() = default;
  virtual void deliver(int dest, Envelope e) = 0;
  /// Called once from finalize, after the local mailbox is closed to
  /// new receives.
  virtual void shutdown(Mailbox& own, std::chrono::milliseconds linger) = 0;
};

}  // namespace packmp::detail
