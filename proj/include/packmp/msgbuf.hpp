#pragma once

// Pack buffer bound to a communicator. Manipulators put communication into
// the same expression as packing:
//
//   buf << a << b << send(1);           // rank 0
//   buf.get() >> a >> b;                // rank 1
//   buf << a << b << bcast(0) >> a >> b;  // everyone

#include <optional>

#include "packmp/pack.hpp"
#include "packmp/transport.hpp"

namespace packmp {

struct send {
  int dest;
  std::uint32_t tag = 0;
};
struct bcast {
  int root;
};
struct gather {
  int root;
};
struct scatter {
  int root;
};

class MsgBuf : public Buffer {
 public:
  /// Bound to the world communicator, in the context's encoding.
  explicit MsgBuf(Context& ctx);
  MsgBuf(Context& ctx, Communicator comm);

  Context& context() const noexcept { return *ctx_; }
  const Communicator& comm() const noexcept { return comm_; }
  void set_comm(Communicator comm) { comm_ = std::move(comm); }

  /// Sender of the last get, as a local rank.
  std::optional<int> last_source() const noexcept { return last_source_; }
  std::optional<std::uint32_t> last_tag() const noexcept { return last_tag_; }

  /// Sends the whole contents as one message, then resets.
  MsgBuf& send_to(int dest, std::uint32_t tag = 0);
  /// Replaces the contents with the next matching message.
  MsgBuf& get(std::optional<int> source = any_source, std::optional<std::uint32_t> tag = 0);
  /// Like get, but returns false instead of blocking.
  bool try_get(std::optional<int> source = any_source, std::optional<std::uint32_t> tag = 0);

  /// Every member ends with the root's bytes, cursor at 0.
  MsgBuf& bcast_from(int root);
  /// Root ends with every member's bytes concatenated in rank order;
  /// the others end empty.
  MsgBuf& gather_to(int root);
  /// The root's buffer holds one segment per member (see pack_segment);
  /// member i ends with segment i.
  MsgBuf& scatter_from(int root);

 private:
  Context* ctx_;
  Communicator comm_;
  std::optional<int> last_source_;
  std::optional<std::uint32_t> last_tag_;
};

inline MsgBuf& operator<<(MsgBuf& buf, const send& m) { return buf.send_to(m.dest, m.tag); }
inline MsgBuf& operator<<(MsgBuf& buf, const bcast& m) { return buf.bcast_from(m.root); }
inline MsgBuf& operator<<(MsgBuf& buf, const gather& m) { return buf.gather_to(m.root); }
inline MsgBuf& operator<<(MsgBuf& buf, const scatter& m) { return buf.scatter_from(m.root); }

/// Appends one scatter segment: u32 big-endian length, then the bytes.
void pack_segment(Buffer& table, std::span<const std::uint8_t> segment);
inline void pack_segment(Buffer& table, const Buffer& segment) { pack_segment(table, segment.data()); }

/// Splits a segment table. Throws Error{malformed_segment_table}.
std::vector<Bytes> split_segments(std::span<const std::uint8_t> table);

}  // namespace packmp
