#include "packmp/msgbuf.hpp"

namespace packmp {

MsgBuf::MsgBuf(Context& ctx) : MsgBuf(ctx, ctx.world()) {}

MsgBuf::MsgBuf(Context& ctx, Communicator comm) : Buffer(ctx.encoding()), ctx_(&ctx), comm_(std::move(comm)) {}

MsgBuf& MsgBuf::send_to(int dest, std::uint32_t tag) {
  ctx_->send(comm_, dest, tag, data());
  reset();
  return *this;
}

MsgBuf& MsgBuf::get(std::optional<int> source, std::optional<std::uint32_t> tag) {
  Message m = ctx_->recv(comm_, source, tag);
  assign(std::move(m.payload));
  last_source_ = m.source;
  last_tag_ = m.tag;
  return *this;
}

bool MsgBuf::try_get(std::optional<int> source, std::optional<std::uint32_t> tag) {
  auto m = ctx_->try_recv(comm_, source, tag);
  if (!m) return false;
  assign(std::move(m->payload));
  last_source_ = m->source;
  last_tag_ = m->tag;
  return true;
}

MsgBuf& MsgBuf::bcast_from(int root) {
  Bytes got = ctx_->broadcast(comm_, root, data());
  if (comm_.local_rank() == root)
    rewind();
  else
    assign(std::move(got));
  return *this;
}

MsgBuf& MsgBuf::gather_to(int root) {
  auto parts = ctx_->gather(comm_, root, data());
  if (comm_.local_rank() != root) {
    reset();
    return *this;
  }
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  Bytes all;
  all.reserve(total);
  for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  assign(std::move(all));
  return *this;
}

MsgBuf& MsgBuf::scatter_from(int root) {
  std::vector<Bytes> segments;
  if (comm_.local_rank() == root) {
    try {
      segments = split_segments(data());
    } catch (const Error&) {
      // Release the other members before reporting.
      try {
        ctx_->scatter(comm_, root, {});
      } catch (const SegmentCountMismatch&) {
      }
      throw;
    }
  }
  assign(ctx_->scatter(comm_, root, segments));
  return *this;
}

void pack_segment(Buffer& table, std::span<const std::uint8_t> segment) {
  if (segment.size() > kMaxLength) throw Error(ErrorCode::length_overflow, "segment exceeds 2^31-1 bytes");
  table.put_be32(static_cast<std::uint32_t>(segment.size()));
  table.append_raw(segment);
}

std::vector<Bytes> split_segments(std::span<const std::uint8_t> table) {
  std::vector<Bytes> out;
  std::size_t at = 0;
  while (at < table.size()) {
    if (table.size() - at < 4)
      throw Error(ErrorCode::malformed_segment_table, "segment table ends inside a length prefix");
    std::uint32_t n = detail::load_be32(table.data() + at);
    at += 4;
    if (table.size() - at < n)
      throw Error(ErrorCode::malformed_segment_table,
                  "segment " + std::to_string(out.size()) + " claims " + std::to_string(n) + " bytes, " +
                      std::to_string(table.size() - at) + " left");
    out.emplace_back(table.begin() + static_cast<std::ptrdiff_t>(at),
                     table.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
  }
  return out;
}

}  // namespace packmp
