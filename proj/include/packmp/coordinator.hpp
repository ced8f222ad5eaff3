#pragma once

// Rendezvous server for socket-mesh worlds. Each rank registers its listen
// address; once all have registered, every rank receives the full table.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "packmp/buffer.hpp"
#include "packmp/error.hpp"

namespace packmp {

class Coordinator {
 public:
  /// Binds an ephemeral port on `host`.
  explicit Coordinator(const std::string& host = "127.0.0.1");
  ~Coordinator();
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  /// `host:port` to hand to ranks.
  std::string address() const;

  struct Options {
    int nprocs = 1;
    /// When set, registrations with another encoding fail the rendezvous.
    std::optional<Encoding> encoding;
    /// Measured from the first registration; a world where nobody ever
    /// registers is ended by `abandon` instead.
    std::chrono::milliseconds timeout{10000};
    /// Polled while waiting; returning true stops the rendezvous.
    std::function<bool()> abandon;
    std::function<void(int rank)> on_register;
  };

  enum class Outcome { complete, abandoned, failed };

  struct Result {
    Outcome outcome = Outcome::failed;
    ErrorCode code = ErrorCode::rendezvous_timeout;
    std::string message;
  };

  /// Blocks until the table was sent, the rendezvous failed (ranks that
  /// registered get the diagnostic), or `abandon` fired.
  Result run(const Options& options);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace packmp
