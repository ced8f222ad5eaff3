#include "transport/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "packmp/error.hpp"

namespace packmp::detail {

namespace {

[[noreturn]] void io_fail(const std::string& what) {
  throw Error(ErrorCode::io_error, what + ": " + std::strerror(errno));
}

int millis_until(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

// Waits for readability; false on timeout.
bool wait_readable(int fd, std::optional<Clock::time_point> deadline) {
  if (!deadline) return true;
  for (;;) {
    pollfd p{fd, POLLIN, 0};
    int rc = ::poll(&p, 1, millis_until(*deadline));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) io_fail("poll");
  }
}

// Reads n bytes. Returns false on EOF before the first byte or timeout.
bool read_exact(int fd, std::uint8_t* out, std::size_t n, std::optional<Clock::time_point> deadline) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_readable(fd, deadline)) {
      if (got == 0) return false;
      throw Error(ErrorCode::protocol_error, "timed out inside a frame");
    }
    ssize_t rc = ::recv(fd, out + got, n - got, 0);
    if (rc > 0) {
      got += static_cast<std::size_t>(rc);
    } else if (rc == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::protocol_error, "connection closed inside a frame");
    } else if (errno != EINTR) {
      if (got == 0 && (errno == ECONNRESET || errno == EPIPE)) return false;
      io_fail("recv");
    }
  }
  return true;
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    ssize_t rc = ::send(fd, data, n, MSG_NOSIGNAL);
    if (rc < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET)
        throw Error(ErrorCode::disconnected, std::string("peer closed: ") + std::strerror(errno));
      io_fail("send");
    }
    data += rc;
    n -= static_cast<std::size_t>(rc);
  }
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  std::string h = host.empty() || host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw Error(ErrorCode::invalid_argument, "cannot resolve host '" + host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

std::array<std::uint8_t, kHeaderSize> encode_header(const Envelope& e) {
  if (e.payload.size() > kMaxLength)
    throw Error(ErrorCode::length_overflow, "payload exceeds 2^31-1 bytes");
  std::array<std::uint8_t, kHeaderSize> h{};
  std::copy(kMagic.begin(), kMagic.end(), h.begin());
  h[4] = kWireVersion;
  h[5] = e.kind;
  store_be32(&h[6], static_cast<std::uint32_t>(e.src));
  store_be32(&h[10], static_cast<std::uint32_t>(e.dest));
  store_be32(&h[14], e.comm_id);
  store_be32(&h[18], e.tag);
  store_be32(&h[22], static_cast<std::uint32_t>(e.payload.size()));
  return h;
}

std::uint32_t decode_header(std::span<const std::uint8_t, kHeaderSize> raw, Envelope& e) {
  if (!std::equal(kMagic.begin(), kMagic.end(), raw.begin()))
    throw Error(ErrorCode::protocol_error, "bad frame magic");
  if (raw[4] != kWireVersion)
    throw Error(ErrorCode::protocol_error, "unsupported frame version " + std::to_string(raw[4]));
  if (raw[5] > kKindControl) throw Error(ErrorCode::protocol_error, "bad frame kind " + std::to_string(raw[5]));
  e.kind = raw[5];
  e.src = static_cast<int>(load_be32(&raw[6]));
  e.dest = static_cast<int>(load_be32(&raw[10]));
  e.comm_id = load_be32(&raw[14]);
  e.tag = load_be32(&raw[18]);
  std::uint32_t len = load_be32(&raw[22]);
  if (len > kMaxLength) throw Error(ErrorCode::protocol_error, "frame payload length exceeds 2^31-1");
  return len;
}

void Fd::reset() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::invalid_argument, "expected host:port, got '" + address + "'");
  int port = 0;
  try {
    port = std::stoi(address.substr(colon + 1));
  } catch (const std::exception&) {
    port = -1;
  }
  if (port <= 0 || port > 65535) throw Error(ErrorCode::invalid_argument, "bad port in '" + address + "'");
  return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
}

Fd listen_tcp(const std::string& host, std::uint16_t port, int backlog) {
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) io_fail("socket");
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, port);
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) io_fail("bind");
  if (::listen(fd.get(), backlog) != 0) io_fail("listen");
  return fd;
}

std::uint16_t local_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) io_fail("getsockname");
  return ntohs(addr.sin_port);
}

std::string local_host(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) io_fail("getsockname");
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
  return buf;
}

Fd connect_tcp(const std::string& host, std::uint16_t port, Clock::time_point deadline) {
  sockaddr_in addr = resolve(host, port);
  for (;;) {
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) io_fail("socket");
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
      int one = 1;
      ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return fd;
    }
    if (errno != ECONNREFUSED && errno != EINTR && errno != EAGAIN && errno != ETIMEDOUT)
      io_fail("connect to " + host + ":" + std::to_string(port));
    if (Clock::now() >= deadline)
      throw Error(ErrorCode::rendezvous_timeout, "could not connect to " + host + ":" + std::to_string(port));
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

Fd accept_tcp(int listen_fd, Clock::time_point deadline) {
  if (!wait_readable(listen_fd, deadline)) return Fd();
  for (;;) {
    int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Fd(fd);
    }
    if (errno != EINTR && errno != ECONNABORTED) io_fail("accept");
  }
}

void write_frame(int fd, const Envelope& e) {
  auto header = encode_header(e);
  write_all(fd, header.data(), header.size());
  write_all(fd, e.payload.data(), e.payload.size());
}

std::optional<Envelope> read_frame(int fd, std::optional<Clock::time_point> deadline) {
  std::array<std::uint8_t, kHeaderSize> raw{};
  if (!read_exact(fd, raw.data(), raw.size(), deadline)) return std::nullopt;
  Envelope e;
  std::uint32_t len = decode_header(raw, e);
  e.payload.resize(len);
  if (len > 0 && !read_exact(fd, e.payload.data(), len, deadline))
    throw Error(ErrorCode::protocol_error, "connection closed inside a frame");
  return e;
}

}  // namespace packmp::detail
