#include <algorithm>
#include <cstring>

#include "packmp/error.hpp"
#include "packmp/transport.hpp"
#include "transport/mailbox.hpp"

namespace packmp {

namespace {

using detail::kKindControl;
using detail::kKindData;

// Control tags. Reuse across calls is safe: collectives on one communicator
// are issued in the same order everywhere and delivery is FIFO per sender.
enum CtlTag : std::uint32_t {
  kBarrierIn = 1,
  kBarrierOut,
  kBroadcast,
  kGather,
  kScatter,
  kCreateRequest,
  kCreateReply,
};

enum CreateStatus : std::uint8_t { kCreateOk = 0, kCreateMismatch, kCreateEmpty, kCreateRange };

Bytes encode_subset(std::span<const int> members) {
  Bytes out(4 + 4 * members.size());
  detail::store_be32(out.data(), static_cast<std::uint32_t>(members.size()));
  for (std::size_t i = 0; i < members.size(); ++i)
    detail::store_be32(out.data() + 4 + 4 * i, static_cast<std::uint32_t>(members[i]));
  return out;
}

[[noreturn]] void raise_create_status(std::uint8_t status) {
  switch (status) {
    case kCreateEmpty:
      throw Error(ErrorCode::empty_subset, "comm_create: empty member subset");
    case kCreateRange:
      throw Error(ErrorCode::invalid_rank, "comm_create: subset names a rank outside the parent or repeats one");
    default:
      throw Error(ErrorCode::subset_mismatch, "comm_create: members passed different subsets");
  }
}

}  // namespace

int Communicator::local_of(int world) const noexcept {
  auto it = std::find(members_.begin(), members_.end(), world);
  return it == members_.end() ? -1 : static_cast<int>(it - members_.begin());
}

Context::Context(int rank, int size, Encoding encoding, Backend backend, std::shared_ptr<detail::Mailbox> mailbox,
                 std::unique_ptr<detail::Link> link, std::chrono::milliseconds linger)
    : rank_(rank),
      size_(size),
      encoding_(encoding),
      backend_(backend),
      mailbox_(std::move(mailbox)),
      link_(std::move(link)),
      linger_(linger) {
  std::vector<int> all(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) all[static_cast<std::size_t>(i)] = i;
  world_ = Communicator(0, std::move(all), rank);
}

Context::~Context() {
  try {
    finalize();
  } catch (...) {
  }
}

void Context::check_open() const {
  if (finalized_.load()) throw Error(ErrorCode::finalized, "transport finalized");
}

void Context::check_root(const Communicator& comm, int root) const {
  if (root < 0 || root >= comm.size())
    throw Error(ErrorCode::invalid_root,
                "root " + std::to_string(root) + " outside communicator of size " + std::to_string(comm.size()));
}

void Context::post(const Communicator& comm, int dest, std::uint8_t kind, std::uint32_t tag,
                   std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxLength) throw Error(ErrorCode::length_overflow, "payload exceeds 2^31-1 bytes");
  detail::Envelope e;
  e.src = rank_;
  e.dest = comm.world_rank(dest);
  e.comm_id = comm.id();
  e.kind = kind;
  e.tag = tag;
  e.payload.assign(payload.begin(), payload.end());
  link_->deliver(e.dest, std::move(e));
}

Message Context::await(const Communicator& comm, std::optional<int> source, std::uint8_t kind,
                       std::optional<std::uint32_t> tag, bool block) {
  detail::Matcher m{comm.id(), kind, std::nullopt, tag, {}};
  if (source) {
    m.src = comm.world_rank(*source);
  } else {
    for (int w : comm.members())
      if (w != rank_) m.candidates.push_back(w);
  }
  if (!block) {
    auto got = mailbox_->try_take(m);
    if (!got) throw Error(ErrorCode::protocol_error, "expected message not queued");
    return Message{comm.local_of(got->src), got->tag, std::move(got->payload)};
  }
  detail::Envelope e = mailbox_->take(m);
  return Message{comm.local_of(e.src), e.tag, std::move(e.payload)};
}

void Context::send(const Communicator& comm, int dest, std::uint32_t tag, std::span<const std::uint8_t> payload) {
  check_open();
  if (dest < 0 || dest >= comm.size())
    throw Error(ErrorCode::invalid_rank,
                "destination " + std::to_string(dest) + " outside communicator of size " + std::to_string(comm.size()));
  if (dest == comm.local_rank()) throw Error(ErrorCode::self_send, "send to self");
  post(comm, dest, kKindData, tag, payload);
}

Message Context::recv(const Communicator& comm, std::optional<int> source, std::optional<std::uint32_t> tag) {
  check_open();
  if (source && (*source < 0 || *source >= comm.size()))
    throw Error(ErrorCode::invalid_rank, "source " + std::to_string(*source) + " outside communicator");
  return await(comm, source, kKindData, tag, true);
}

std::optional<Message> Context::try_recv(const Communicator& comm, std::optional<int> source,
                                         std::optional<std::uint32_t> tag) {
  check_open();
  if (source && (*source < 0 || *source >= comm.size()))
    throw Error(ErrorCode::invalid_rank, "source " + std::to_string(*source) + " outside communicator");
  detail::Matcher m{comm.id(), kKindData, source ? std::optional<int>(comm.world_rank(*source)) : std::nullopt, tag, {}};
  auto e = mailbox_->try_take(m);
  if (!e) return std::nullopt;
  return Message{comm.local_of(e->src), e->tag, std::move(e->payload)};
}

void Context::barrier(const Communicator& comm) {
  check_open();
  const int n = comm.size();
  if (n == 1) return;
  if (comm.local_rank() == 0) {
    for (int i = 1; i < n; ++i) await(comm, i, kKindControl, kBarrierIn, true);
    for (int i = 1; i < n; ++i) post(comm, i, kKindControl, kBarrierOut, {});
  } else {
    post(comm, 0, kKindControl, kBarrierIn, {});
    await(comm, 0, kKindControl, kBarrierOut, true);
  }
}

Bytes Context::broadcast(const Communicator& comm, int root, std::span<const std::uint8_t> payload) {
  check_open();
  check_root(comm, root);
  if (comm.local_rank() != root) return await(comm, root, kKindControl, kBroadcast, true).payload;
  for (int i = 0; i < comm.size(); ++i)
    if (i != root) post(comm, i, kKindControl, kBroadcast, payload);
  return Bytes(payload.begin(), payload.end());
}

std::vector<Bytes> Context::gather(const Communicator& comm, int root, std::span<const std::uint8_t> payload) {
  check_open();
  check_root(comm, root);
  if (comm.local_rank() != root) {
    post(comm, root, kKindControl, kGather, payload);
    return {};
  }
  std::vector<Bytes> out(static_cast<std::size_t>(comm.size()));
  for (int i = 0; i < comm.size(); ++i) {
    if (i == root)
      out[static_cast<std::size_t>(i)].assign(payload.begin(), payload.end());
    else
      out[static_cast<std::size_t>(i)] = await(comm, i, kKindControl, kGather, true).payload;
  }
  return out;
}

Bytes Context::scatter(const Communicator& comm, int root, std::span<const Bytes> segments) {
  check_open();
  check_root(comm, root);
  const int n = comm.size();
  if (comm.local_rank() != root) {
    Bytes got = await(comm, root, kKindControl, kScatter, true).payload;
    if (got.empty() || got[0] != 0)
      throw Error(ErrorCode::collective_aborted, "scatter aborted at root " + std::to_string(root));
    return Bytes(got.begin() + 1, got.end());
  }
  const bool ok = segments.size() == static_cast<std::size_t>(n);
  for (int i = 0; i < n; ++i) {
    if (i == root) continue;
    Bytes frame;
    if (ok) {
      const Bytes& seg = segments[static_cast<std::size_t>(i)];
      frame.reserve(seg.size() + 1);
      frame.push_back(0);
      frame.insert(frame.end(), seg.begin(), seg.end());
    } else {
      frame.push_back(1);
    }
    post(comm, i, kKindControl, kScatter, frame);
  }
  if (!ok) throw SegmentCountMismatch(static_cast<std::size_t>(n), segments.size());
  return segments[static_cast<std::size_t>(root)];
}

std::uint32_t Context::next_comm_id() {
  std::uint32_t c = ++comm_counter_;
  if (c > 0xFFFF) throw Error(ErrorCode::invalid_argument, "communicator ids exhausted on this rank");
  return (static_cast<std::uint32_t>(rank_ + 1) << 16) | c;
}

std::optional<Communicator> Context::comm_create(const Communicator& parent, std::span<const int> members) {
  check_open();
  const int n = parent.size();
  std::vector<int> locals(members.begin(), members.end());
  std::sort(locals.begin(), locals.end());
  Bytes mine = encode_subset(locals);

  auto classify = [n](const std::vector<int>& sorted) -> std::uint8_t {
    if (sorted.empty()) return kCreateEmpty;
    if (sorted.front() < 0 || sorted.back() >= n || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      return kCreateRange;
    return kCreateOk;
  };

  std::uint8_t status = kCreateOk;
  std::uint32_t id = 0;
  if (parent.local_rank() == 0) {
    for (int i = 1; i < n; ++i) {
      Bytes theirs = await(parent, i, kKindControl, kCreateRequest, true).payload;
      if (theirs != mine) status = kCreateMismatch;
    }
    if (status == kCreateOk) status = classify(locals);
    if (status == kCreateOk) id = next_comm_id();
    Bytes reply(5);
    reply[0] = status;
    detail::store_be32(reply.data() + 1, id);
    for (int i = 1; i < n; ++i) post(parent, i, kKindControl, kCreateReply, reply);
  } else {
    post(parent, 0, kKindControl, kCreateRequest, mine);
    Bytes reply = await(parent, 0, kKindControl, kCreateReply, true).payload;
    if (reply.size() != 5) throw Error(ErrorCode::protocol_error, "bad comm_create reply");
    status = reply[0];
    id = detail::load_be32(reply.data() + 1);
  }
  if (status != kCreateOk) raise_create_status(status);

  std::vector<int> world_members;
  world_members.reserve(locals.size());
  int self = -1;
  for (int l : locals) {
    if (l == parent.local_rank()) self = static_cast<int>(world_members.size());
    world_members.push_back(parent.world_rank(l));
  }
  if (self < 0) return std::nullopt;
  return Communicator(id, std::move(world_members), self);
}

void Context::on_finalize(std::function<void()> hook) {
  std::lock_guard lock(finalize_mutex_);
  hooks_.push_back(std::move(hook));
}

void Context::finalize() {
  std::lock_guard lock(finalize_mutex_);
  if (finalized_.load()) return;
  for (auto& hook : hooks_) {
    try {
      hook();
    } catch (...) {
    }
  }
  finalized_.store(true);
  mailbox_->close();
  link_->shutdown(*mailbox_, linger_);
  ++finalize_count_;
}

}  // namespace packmp
