#pragma once

// Master/slave task farm over the world communicator. Rank 0 drives a
// Master; every other rank runs slave_loop with an identical HandlerTable.
//
// Request frame: selector u32 big-endian (kStop ends the loop), then the
// packed arguments. Reply frame: status u8 (0 ok, 1 handler error,
// 2 unknown selector), then the handler's buffer or a UTF-8 diagnostic.
// All farm traffic uses tag 1, leaving tag 0 to user messages.

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "packmp/msgbuf.hpp"

namespace packmp {

inline constexpr std::uint32_t kStop = 0xFFFFFFFFu;
inline constexpr std::uint32_t kFarmTag = 1;

/// A handler reads its arguments from the buffer and leaves its reply in
/// it, usually via `args.reset() << result`.
using Handler = std::function<void(MsgBuf& args)>;

class HandlerTable {
 public:
  /// Names must be unique identifiers; the wire selector is the position.
  HandlerTable& add(std::string name, Handler handler);

  std::size_t size() const noexcept { return entries_.size(); }
  std::optional<std::uint32_t> index_of(std::string_view name) const;
  const std::string& name(std::uint32_t selector) const { return entries_.at(selector).first; }
  const Handler& handler(std::uint32_t selector) const { return entries_.at(selector).second; }

  /// FNV-1a over the ordered names; exchanged at startup.
  std::uint64_t digest() const noexcept;

 private:
  std::vector<std::pair<std::string, Handler>> entries_;
};

/// Serves requests from rank 0 until STOP; returns the number of requests
/// answered. Throws Error{table_mismatch} if the master's table differs.
std::size_t slave_loop(Context& ctx, const HandlerTable& table);

class Master {
 public:
  /// Waits for every slave's table digest. On a mismatch all slaves are
  /// released and Error{table_mismatch} is thrown.
  Master(Context& ctx, const HandlerTable& table);
  /// Shuts the slaves down.
  ~Master();

  Master(const Master&) = delete;
  Master& operator=(const Master&) = delete;

  int nslaves() const noexcept { return ctx_->size() - 1; }
  const std::set<int>& idle() const noexcept { return idle_; }
  const std::set<int>& busy() const noexcept { return busy_; }
  std::size_t outstanding() const noexcept { return busy_.size(); }
  bool all_idle() const noexcept { return busy_.empty(); }

  /// A fresh buffer with the selector already written; pack arguments next.
  MsgBuf request(std::string_view selector) const;
  MsgBuf request(std::uint32_t selector) const;

  /// Sends to the lowest-numbered idle slave and returns its rank. The
  /// request buffer is left empty.
  int exec(MsgBuf& request);

  /// Blocks for the next reply from any busy slave and frees it. A failed
  /// handler surfaces as HandlerError after the slave is freed.
  std::pair<int, MsgBuf> get_returnv();

  /// Dispatches every job (packed arguments for `selector`) exactly once:
  /// prime each slave, then one in for each one out, then drain. Replies
  /// come back in job order.
  std::vector<MsgBuf> run_joblist(std::string_view selector, const std::vector<Bytes>& jobs);

  /// Drains outstanding replies, then sends STOP to every slave.
  /// Idempotent and never throws.
  void shutdown() noexcept;
  bool shut_down() const noexcept { return stopped_; }

 private:
  Context* ctx_;
  const HandlerTable* table_;
  std::set<int> idle_;
  std::set<int> busy_;
  bool stopped_ = false;
};

}  // namespace packmp
