#include <sys/socket.h>

#include <cstdio>
#include <thread>

#include "packmp/error.hpp"
#include "transport/internal.hpp"
#include "transport/wire.hpp"

namespace packmp::detail {

namespace {

class MeshLink final : public Link {
 public:
  MeshLink(int rank, int size, std::shared_ptr<Mailbox> mailbox) : rank_(rank), mailbox_(std::move(mailbox)) {
    peers_.resize(static_cast<std::size_t>(size));
  }

  ~MeshLink() override { teardown(std::chrono::milliseconds(0)); }

  void attach(int peer, Fd fd) {
    auto p = std::make_unique<Peer>();
    p->fd = std::move(fd);
    peers_[static_cast<std::size_t>(peer)] = std::move(p);
  }

  void start() {
    for (std::size_t r = 0; r < peers_.size(); ++r)
      if (peers_[r]) peers_[r]->reader = std::thread([this, r] { read_loop(static_cast<int>(r)); });
  }

  void deliver(int dest, Envelope e) override {
    Peer& p = *peers_.at(static_cast<std::size_t>(dest));
    std::lock_guard lock(p.write_mutex);
    if (p.write_closed) throw Error(ErrorCode::finalized, "transport finalized");
    write_frame(p.fd.get(), e);
  }

  void shutdown(Mailbox& own, std::chrono::milliseconds linger) override {
    (void)own;
    teardown(linger);
  }

 private:
  struct Peer {
    Fd fd;
    std::mutex write_mutex;
    bool write_closed = false;
    std::thread reader;
  };

  void read_loop(int peer) {
    int fd = peers_[static_cast<std::size_t>(peer)]->fd.get();
    try {
      while (auto frame = read_frame(fd)) {
        if (frame->kind == kKindControl && frame->tag == kTagHello && frame->comm_id == 0) continue;
        if (frame->src != peer || frame->dest != rank_)
          throw Error(ErrorCode::protocol_error, "misaddressed frame from rank " + std::to_string(peer));
        mailbox_->push(std::move(*frame));
      }
    } catch (const Error& e) {
      if (!torn_down_.load()) std::fprintf(stderr, "packmp: rank %d: link to rank %d: %s\n", rank_, peer, e.what());
    }
    mailbox_->peer_closed(peer);
  }

  void teardown(std::chrono::milliseconds linger) {
    if (torn_down_.exchange(true)) return;
    std::vector<int> others;
    for (std::size_t r = 0; r < peers_.size(); ++r) {
      if (!peers_[r]) continue;
      others.push_back(static_cast<int>(r));
      std::lock_guard lock(peers_[r]->write_mutex);
      peers_[r]->write_closed = true;
      ::shutdown(peers_[r]->fd.get(), SHUT_WR);
    }
    // Readers see EOF once each peer has finalized (or died); waiting for
    // that keeps our unread data from turning into a reset on their side.
    mailbox_->wait_peers_closed(others, Clock::now() + linger);
    for (auto& p : peers_) {
      if (!p) continue;
      ::shutdown(p->fd.get(), SHUT_RDWR);
      if (p->reader.joinable()) p->reader.join();
      p->fd.reset();
    }
  }

  int rank_;
  std::shared_ptr<Mailbox> mailbox_;
  std::vector<std::unique_ptr<Peer>> peers_;
  std::atomic<bool> torn_down_{false};
};

Envelope control_frame(int src, int dest, std::uint32_t tag, Bytes payload) {
  Envelope e;
  e.src = src;
  e.dest = dest;
  e.kind = kKindControl;
  e.tag = tag;
  e.payload = std::move(payload);
  return e;
}

}  // namespace

std::unique_ptr<Context> init_socket_mesh(const WorldConfig& config) {
  const int n = config.nprocs;
  if (n < 1) throw Error(ErrorCode::invalid_argument, "nprocs must be at least 1");
  if (!config.rank || *config.rank < 0 || *config.rank >= n)
    throw Error(ErrorCode::invalid_argument, "socket mesh needs a rank in [0, nprocs)");
  if (config.coordinator.empty()) throw Error(ErrorCode::invalid_argument, "socket mesh needs a coordinator address");
  const int rank = *config.rank;
  const auto deadline = Clock::now() + config.timeout;

  Fd listener = listen_tcp("0.0.0.0", 0, n + 4);
  auto [chost, cport] = split_host_port(config.coordinator);
  Fd coord = connect_tcp(chost, cport, deadline);

  Registration reg;
  reg.rank = rank;
  reg.nprocs = n;
  reg.encoding = config.encoding;
  reg.host = local_host(coord.get());
  reg.port = local_port(listener.get());
  write_frame(coord.get(), control_frame(rank, static_cast<int>(kNoRank), kTagRegister, encode_registration(reg)));

  // The coordinator's own clock starts at the first registration, so give
  // it a little more than one timeout to answer.
  auto table_frame = read_frame(coord.get(), Clock::now() + config.timeout + std::chrono::seconds(2));
  if (!table_frame) throw Error(ErrorCode::rendezvous_timeout, "no address table from coordinator");
  if (table_frame->kind != kKindControl || table_frame->tag != kTagTable)
    throw Error(ErrorCode::protocol_error, "unexpected frame from coordinator");
  std::vector<PeerAddress> table = decode_table(table_frame->payload, n);
  coord.reset();

  auto mailbox = std::make_shared<Mailbox>();
  auto link = std::make_unique<MeshLink>(rank, n, mailbox);
  const auto mesh_deadline = Clock::now() + config.timeout;

  for (int j = rank + 1; j < n; ++j) {
    const auto& addr = table[static_cast<std::size_t>(j)];
    Fd fd = connect_tcp(addr.host, addr.port, mesh_deadline);
    write_frame(fd.get(), control_frame(rank, j, kTagHello, {}));
    link->attach(j, std::move(fd));
  }
  for (int accepted = 0; accepted < rank; ++accepted) {
    Fd fd = accept_tcp(listener.get(), mesh_deadline);
    if (!fd) throw Error(ErrorCode::rendezvous_timeout, "timed out waiting for lower ranks to connect");
    auto hello = read_frame(fd.get(), mesh_deadline);
    if (!hello || hello->kind != kKindControl || hello->tag != kTagHello || hello->dest != rank || hello->src < 0 ||
        hello->src >= rank)
      throw Error(ErrorCode::protocol_error, "bad hello on mesh connection");
    link->attach(hello->src, std::move(fd));
  }
  link->start();

  return ContextAccess::make(rank, n, config.encoding, Backend::socket_mesh, std::move(mailbox), std::move(link),
                             config.linger);
}

}  // namespace packmp::detail
