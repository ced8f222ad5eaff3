#include <poll.h>

#include <map>

#include "packmp/coordinator.hpp"
#include "transport/internal.hpp"
#include "transport/wire.hpp"

namespace packmp::detail {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  std::uint8_t b[4];
  store_be32(b, v);
  out.insert(out.end(), b, b + 4);
}

void put_str(Bytes& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const Bytes& in;
  std::size_t at = 0;

  void need(std::size_t n) const {
    if (in.size() - at < n) throw Error(ErrorCode::protocol_error, "short rendezvous message");
  }
  std::uint8_t u8() {
    need(1);
    return in[at++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = load_be32(in.data() + at);
    at += 4;
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(in.begin() + static_cast<std::ptrdiff_t>(at), in.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    return s;
  }
};

}  // namespace

Bytes encode_registration(const Registration& r) {
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(r.nprocs));
  out.push_back(static_cast<std::uint8_t>(r.encoding));
  put_u32(out, r.port);
  put_str(out, r.host);
  return out;
}

Registration decode_registration(int rank, const Bytes& payload) {
  Reader rd{payload};
  Registration r;
  r.rank = rank;
  r.nprocs = static_cast<int>(rd.u32());
  std::uint8_t enc = rd.u8();
  if (enc > 1) throw Error(ErrorCode::protocol_error, "bad encoding in registration");
  r.encoding = static_cast<Encoding>(enc);
  std::uint32_t port = rd.u32();
  if (port == 0 || port > 65535) throw Error(ErrorCode::protocol_error, "bad port in registration");
  r.port = static_cast<std::uint16_t>(port);
  r.host = rd.str();
  return r;
}

Bytes encode_table(const std::vector<PeerAddress>& table) {
  Bytes out{static_cast<std::uint8_t>(TableStatus::ok)};
  for (const auto& p : table) {
    put_str(out, p.host);
    put_u32(out, p.port);
  }
  return out;
}

Bytes encode_table_error(std::uint8_t status, const std::string& diagnostic) {
  Bytes out{status};
  out.insert(out.end(), diagnostic.begin(), diagnostic.end());
  return out;
}

std::vector<PeerAddress> decode_table(const Bytes& payload, int nprocs) {
  Reader rd{payload};
  auto status = static_cast<TableStatus>(rd.u8());
  if (status != TableStatus::ok) {
    std::string diag(payload.begin() + 1, payload.end());
    switch (status) {
      case TableStatus::rank_conflict:
        throw Error(ErrorCode::rank_conflict, diag);
      case TableStatus::encoding_mismatch:
        throw Error(ErrorCode::encoding_mismatch, diag);
      case TableStatus::timeout:
        throw Error(ErrorCode::rendezvous_timeout, diag);
      default:
        throw Error(ErrorCode::protocol_error, diag);
    }
  }
  std::vector<PeerAddress> table(static_cast<std::size_t>(nprocs));
  for (auto& p : table) {
    p.host = rd.str();
    std::uint32_t port = rd.u32();
    if (port == 0 || port > 65535) throw Error(ErrorCode::protocol_error, "bad port in address table");
    p.port = static_cast<std::uint16_t>(port);
  }
  return table;
}

}  // namespace packmp::detail

namespace packmp {

using detail::Clock;
using detail::Fd;
using detail::TableStatus;

struct Coordinator::Impl {
  Fd listener;
};

Coordinator::Coordinator(const std::string& host) : impl_(std::make_unique<Impl>()) {
  impl_->listener = detail::listen_tcp(host, 0, 128);
}

Coordinator::~Coordinator() = default;

std::string Coordinator::address() const {
  return detail::local_host(impl_->listener.get()) + ":" + std::to_string(detail::local_port(impl_->listener.get()));
}

Coordinator::Result Coordinator::run(const Options& options) {
  const int n = options.nprocs;
  if (n < 1) throw Error(ErrorCode::invalid_argument, "nprocs must be at least 1");

  std::vector<Fd> pending;  // accepted, not yet registered
  std::map<int, std::pair<Fd, detail::Registration>> registered;
  std::optional<Encoding> encoding = options.encoding;
  std::optional<Clock::time_point> deadline;

  auto fail = [&](TableStatus status, ErrorCode code, const std::string& message) {
    detail::Envelope e;
    e.src = static_cast<int>(detail::kNoRank);
    e.kind = detail::kKindControl;
    e.tag = detail::kTagTable;
    e.payload = detail::encode_table_error(static_cast<std::uint8_t>(status), message);
    for (auto& [rank, entry] : registered) {
      e.dest = rank;
      try {
        detail::write_frame(entry.first.get(), e);
      } catch (const Error&) {
      }
    }
    return Result{Outcome::failed, code, message};
  };

  for (;;) {
    if (static_cast<int>(registered.size()) == n) break;
    if (deadline && Clock::now() >= *deadline)
      return fail(TableStatus::timeout, ErrorCode::rendezvous_timeout,
                  "rendezvous timed out with " + std::to_string(registered.size()) + " of " + std::to_string(n) +
                      " ranks registered");
    if (options.abandon && options.abandon())
      return registered.empty() ? Result{Outcome::abandoned, ErrorCode::rendezvous_timeout, "abandoned"}
                                : fail(TableStatus::timeout, ErrorCode::rendezvous_timeout, "launcher abandoned rendezvous");

    std::vector<pollfd> fds;
    fds.push_back({impl_->listener.get(), POLLIN, 0});
    for (auto& fd : pending) fds.push_back({fd.get(), POLLIN, 0});
    int rc = ::poll(fds.data(), fds.size(), 50);
    if (rc <= 0) continue;

    if (fds[0].revents & POLLIN) {
      Fd c = detail::accept_tcp(impl_->listener.get(), Clock::now());
      if (c) pending.push_back(std::move(c));
    }
    for (std::size_t i = 1; i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      Fd& conn = pending[i - 1];
      std::optional<detail::Envelope> frame;
      try {
        frame = detail::read_frame(conn.get(), Clock::now() + std::chrono::seconds(5));
      } catch (const Error&) {
      }
      if (!frame || frame->kind != detail::kKindControl || frame->tag != detail::kTagRegister) {
        conn.reset();
        continue;
      }
      detail::Registration reg;
      try {
        reg = detail::decode_registration(frame->src, frame->payload);
      } catch (const Error& err) {
        conn.reset();
        continue;
      }
      const std::string who = "rank " + std::to_string(reg.rank);
      if (reg.nprocs != n || reg.rank < 0 || reg.rank >= n) {
        registered.emplace(-1 - static_cast<int>(i), std::make_pair(std::move(conn), reg));
        return fail(TableStatus::bad_request, ErrorCode::rank_conflict,
                    who + " registered for a world of " + std::to_string(reg.nprocs) + " ranks, expected " +
                        std::to_string(n));
      }
      if (registered.count(reg.rank)) {
        auto dup = std::make_pair(std::move(conn), reg);
        auto result = fail(TableStatus::rank_conflict, ErrorCode::rank_conflict, who + " registered twice");
        detail::Envelope e;
        e.kind = detail::kKindControl;
        e.tag = detail::kTagTable;
        e.dest = reg.rank;
        e.payload = detail::encode_table_error(static_cast<std::uint8_t>(TableStatus::rank_conflict), result.message);
        try {
          detail::write_frame(dup.first.get(), e);
        } catch (const Error&) {
        }
        return result;
      }
      if (!encoding) encoding = reg.encoding;
      if (reg.encoding != *encoding) {
        registered.emplace(reg.rank, std::make_pair(std::move(conn), reg));
        return fail(TableStatus::encoding_mismatch, ErrorCode::encoding_mismatch,
                    who + " uses a different encoding from the rest of the world");
      }
      registered.emplace(reg.rank, std::make_pair(std::move(conn), reg));
      if (!deadline) deadline = Clock::now() + options.timeout;
      if (options.on_register) options.on_register(reg.rank);
    }
    std::erase_if(pending, [](const Fd& fd) { return !fd; });
  }

  std::vector<detail::PeerAddress> table;
  for (auto& [rank, entry] : registered) table.push_back({entry.second.host, entry.second.port});
  detail::Envelope e;
  e.src = static_cast<int>(detail::kNoRank);
  e.kind = detail::kKindControl;
  e.tag = detail::kTagTable;
  e.payload = detail::encode_table(table);
  for (auto& [rank, entry] : registered) {
    e.dest = rank;
    try {
      detail::write_frame(entry.first.get(), e);
    } catch (const Error&) {
    }
  }
  return Result{Outcome::complete, ErrorCode::rendezvous_timeout, {}};
}

}  // namespace packmp
