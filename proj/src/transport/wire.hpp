#pragma once

// SocketMesh wire frame, all integers big-endian:
//
//   "MPB1" | version u8 = 1 | kind u8 | src u32 | dest u32 | comm_id u32 |
//   tag u32 | payload_len u32 | payload
//
// plus the small set of blocking socket helpers the mesh and the launcher
// coordinator use.

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "transport/mailbox.hpp"

namespace packmp::detail {

inline constexpr std::array<std::uint8_t, 4> kMagic{0x4D, 0x50, 0x42, 0x31};
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderSize = 26;
inline constexpr std::uint32_t kNoRank = 0xFFFFFFFFu;

// Control tags on comm 0 used before the mesh exists.
inline constexpr std::uint32_t kTagRegister = 0x10000001u;
inline constexpr std::uint32_t kTagTable = 0x10000002u;
inline constexpr std::uint32_t kTagHello = 0x10000003u;

// Rendezvous table status byte.
enum class TableStatus : std::uint8_t { ok = 0, rank_conflict = 1, encoding_mismatch = 2, timeout = 3, bad_request = 4 };

std::array<std::uint8_t, kHeaderSize> encode_header(const Envelope& e);
/// Fills everything but the payload; returns payload length.
std::uint32_t decode_header(std::span<const std::uint8_t, kHeaderSize> raw, Envelope& e);

using Clock = std::chrono::steady_clock;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept;

 private:
  int fd_ = -1;
};

std::pair<std::string, std::uint16_t> split_host_port(const std::string& address);

Fd listen_tcp(const std::string& host, std::uint16_t port, int backlog);
std::uint16_t local_port(int fd);
std::string local_host(int fd);
/// Retries refused connections until the deadline.
Fd connect_tcp(const std::string& host, std::uint16_t port, Clock::time_point deadline);
/// Empty Fd when the deadline passes first.
Fd accept_tcp(int listen_fd, Clock::time_point deadline);

void write_frame(int fd, const Envelope& e);
/// nullopt on clean EOF before a frame starts, or when the deadline passes.
/// Throws Error{protocol_error | io_error} on malformed or cut-off frames.
std::optional<Envelope> read_frame(int fd, std::optional<Clock::time_point> deadline = std::nullopt);

}  // namespace packmp::detail
