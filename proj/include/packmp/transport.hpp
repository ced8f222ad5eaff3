#pragma once

// A small message-passing runtime: ranks, tagged point-to-point messages,
// communicators over rank subsets, and flat root-centric collectives.
//
// Two backends share one Context type. InProcess runs ranks as threads of
// one process (see init_in_process); SocketMesh runs one OS process per
// rank connected by a full TCP mesh after a launcher rendezvous.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "packmp/buffer.hpp"

namespace packmp {

enum class Backend : std::uint8_t { in_process, socket_mesh };

namespace detail {
class Mailbox;
class Link;
struct ContextAccess;
}  // namespace detail

class InProcessWorld;

struct WorldConfig {
  int nprocs = 1;
  Backend backend = Backend::in_process;
  Encoding encoding = Encoding::native;
  /// Coordinator `host:port` (socket mesh).
  std::string coordinator;
  /// Socket mesh: this process's rank. In-process: the slot in `world`.
  std::optional<int> rank;
  /// In-process world shared by the rank threads. Null means a private
  /// single-rank world.
  std::shared_ptr<InProcessWorld> world;
  std::chrono::milliseconds timeout{10000};
  /// How long finalize waits for peers to close their side.
  std::chrono::milliseconds linger{10000};

  /// Socket mesh when PACKRUN_RANK/PACKRUN_NPROCS/PACKRUN_COORD are set
  /// (PACKRUN_HETERO=1 selects portable encoding, PACKRUN_TIMEOUT_MS
  /// overrides the rendezvous timeout); otherwise a single in-process rank.
  static WorldConfig from_environment();
};

/// Ordered subset of world ranks. Local rank i is members[i].
class Communicator {
 public:
  Communicator() = default;
  Communicator(std::uint32_t id, std::vector<int> members, int local_rank)
      : id_(id), members_(std::move(members)), local_rank_(local_rank) {}

  std::uint32_t id() const noexcept { return id_; }
  const std::vector<int>& members() const noexcept { return members_; }
  int size() const noexcept { return static_cast<int>(members_.size()); }
  int local_rank() const noexcept { return local_rank_; }
  int world_rank(int local) const { return members_.at(static_cast<std::size_t>(local)); }
  /// Local rank of a world rank, or -1.
  int local_of(int world) const noexcept;

  friend bool operator==(const Communicator&, const Communicator&) = default;

 private:
  std::uint32_t id_ = 0;
  std::vector<int> members_;
  int local_rank_ = 0;
};

struct Message {
  int source;  // local rank in the receiving communicator
  std::uint32_t tag;
  Bytes payload;
};

inline constexpr std::optional<int> any_source = std::nullopt;
inline constexpr std::optional<std::uint32_t> any_tag = std::nullopt;

class Context {
 public:
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;
  ~Context();

  int rank() const noexcept { return rank_; }
  int size() const noexcept { return size_; }
  Encoding encoding() const noexcept { return encoding_; }
  Backend backend() const noexcept { return backend_; }
  const Communicator& world() const noexcept { return world_; }

  /// Buffered send: returns once the message is queued at (or written
  /// towards) the destination. FIFO per (source, destination, comm).
  void send(const Communicator& comm, int dest, std::uint32_t tag, std::span<const std::uint8_t> payload);

  /// Blocks until a matching message arrives. Deadlock is not detected;
  /// a named source that has finalized or died with nothing queued raises
  /// Error{disconnected}.
  Message recv(const Communicator& comm, std::optional<int> source = any_source,
               std::optional<std::uint32_t> tag = any_tag);

  std::optional<Message> try_recv(const Communicator& comm, std::optional<int> source = any_source,
                                  std::optional<std::uint32_t> tag = any_tag);

  // Collectives. Every member calls, in the same order, with the same root.

  void barrier(const Communicator& comm);
  /// `payload` is read at the root only.
  Bytes broadcast(const Communicator& comm, int root, std::span<const std::uint8_t> payload);
  /// At the root: one entry per member in local-rank order. Elsewhere: empty.
  std::vector<Bytes> gather(const Communicator& comm, int root, std::span<const std::uint8_t> payload);
  /// `segments` is read at the root only and must hold one entry per member.
  Bytes scatter(const Communicator& comm, int root, std::span<const Bytes> segments);

  /// Collective over `parent`. `members` are parent local ranks; every
  /// caller passes the same set. Returns nullopt for callers outside it.
  std::optional<Communicator> comm_create(const Communicator& parent, std::span<const int> members);

  /// Idempotent. Runs finalize hooks, then tears the transport down.
  void finalize();
  bool finalized() const noexcept { return finalized_.load(); }
  /// Number of times teardown actually ran (0 or 1).
  int finalize_count() const noexcept { return finalize_count_.load(); }
  /// Called at the start of finalize, before any teardown.
  void on_finalize(std::function<void()> hook);

 private:
  friend struct detail::ContextAccess;

  Context(int rank, int size, Encoding encoding, Backend backend, std::shared_ptr<detail::Mailbox> mailbox,
          std::unique_ptr<detail::Link> link, std::chrono::milliseconds linger);

  void check_open() const;
  void check_root(const Communicator& comm, int root) const;
  void post(const Communicator& comm, int dest, std::uint8_t kind, std::uint32_t tag,
            std::span<const std::uint8_t> payload);
  Message await(const Communicator& comm, std::optional<int> source, std::uint8_t kind,
                std::optional<std::uint32_t> tag, bool block);
  std::uint32_t next_comm_id();

  int rank_;
  int size_;
  Encoding encoding_;
  Backend backend_;
  Communicator world_;
  std::shared_ptr<detail::Mailbox> mailbox_;
  std::unique_ptr<detail::Link> link_;
  std::chrono::milliseconds linger_;
  std::atomic<bool> finalized_{false};
  std::atomic<int> finalize_count_{0};
  std::atomic<std::uint32_t> comm_counter_{0};
  std::mutex finalize_mutex_;
  std::vector<std::function<void()>> hooks_;
};

/// Shared state of an in-process world: one mailbox per rank.
class InProcessWorld {
 public:
  static std::shared_ptr<InProcessWorld> create(int nprocs, Encoding encoding = Encoding::native);

  int size() const noexcept { return static_cast<int>(mailboxes_.size()); }
  Encoding encoding() const noexcept { return encoding_; }

  // Used by the transport internals.
  const std::shared_ptr<detail::Mailbox>& mailbox(int rank) const { return mailboxes_.at(static_cast<std::size_t>(rank)); }
  /// False if the slot was already initialized.
  bool claim(int rank) noexcept { return !claimed_[static_cast<std::size_t>(rank)].exchange(true); }

 private:
  InProcessWorld(int nprocs, Encoding encoding);

  std::vector<std::shared_ptr<detail::Mailbox>> mailboxes_;
  std::unique_ptr<std::atomic<bool>[]> claimed_;
  Encoding encoding_;
};

/// Brings up this process's (or this rank slot's) transport. At most once
/// per process for socket mesh and private worlds, at most once per rank
/// slot of a shared in-process world; otherwise Error{already_initialized}.
std::unique_ptr<Context> init(const WorldConfig& config);

/// Creates an in-process world and initializes every rank of it.
std::vector<std::unique_ptr<Context>> init_in_process(int nprocs, Encoding encoding = Encoding::native);

}  // namespace packmp
