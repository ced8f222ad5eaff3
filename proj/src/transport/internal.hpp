#pragma once

#include <memory>
#include <string>
#include <vector>

#include "packmp/transport.hpp"
#include "transport/mailbox.hpp"

namespace packmp::detail {

struct ContextAccess {
  static std::unique_ptr<Context> make(int rank, int size, Encoding encoding, Backend backend,
                                       std::shared_ptr<Mailbox> mailbox, std::unique_ptr<Link> link,
                                       std::chrono::milliseconds linger) {
    return std::unique_ptr<Context>(
        new Context(rank, size, encoding, backend, std::move(mailbox), std::move(link), linger));
  }
};

std::unique_ptr<Link> make_in_process_link(std::shared_ptr<InProcessWorld> world, int rank);

/// Rendezvous plus mesh setup. Skips the once-per-process check so tests
/// can bring several mesh ranks up as threads of one process.
std::unique_ptr<Context> init_socket_mesh(const WorldConfig& config);

// Rendezvous messages (payloads of control frames on comm 0).

struct Registration {
  int rank = 0;
  int nprocs = 0;
  Encoding encoding = Encoding::native;
  std::string host;
  std::uint16_t port = 0;
};

struct PeerAddress {
  std::string host;
  std::uint16_t port = 0;
};

Bytes encode_registration(const Registration& r);
/// `rank` comes from the frame's src field.
Registration decode_registration(int rank, const Bytes& payload);

Bytes encode_table(const std::vector<PeerAddress>& table);
Bytes encode_table_error(std::uint8_t status, const std::string& diagnostic);
/// Throws the error a non-ok status stands for.
std::vector<PeerAddress> decode_table(const Bytes& payload, int nprocs);

}  // namespace packmp::detail
