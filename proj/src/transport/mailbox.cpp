#include "transport/mailbox.hpp"

#include <algorithm>

#include "packmp/error.hpp"

namespace packmp::detail {

void Mailbox::push(Envelope e) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(e));
  }
  cv_.notify_all();
}

std::optional<Envelope> Mailbox::extract(const Matcher& m) {
  auto it = std::find_if(queue_.begin(), queue_.end(), [&](const Envelope& e) { return m.matches(e); });
  if (it == queue_.end()) return std::nullopt;
  Envelope e = std::move(*it);
  queue_.erase(it);
  return e;
}

bool Mailbox::unreachable(const Matcher& m) const {
  if (m.src) return closed_peers_.count(*m.src) > 0;
  return !m.candidates.empty() &&
         std::all_of(m.candidates.begin(), m.candidates.end(), [&](int r) { return closed_peers_.count(r) > 0; });
}

Envelope Mailbox::take(const Matcher& m) {
  std::unique_lock lock(mutex_);
  for (;;) {
    if (closed_) throw Error(ErrorCode::finalized, "transport finalized");
    if (auto e = extract(m)) return std::move(*e);
    if (unreachable(m))
      throw Error(ErrorCode::disconnected,
                  m.src ? "rank " + std::to_string(*m.src) + " disconnected" : "all peers disconnected");
    cv_.wait(lock);
  }
}

std::optional<Envelope> Mailbox::try_take(const Matcher& m) {
  std::lock_guard lock(mutex_);
  if (closed_) throw Error(ErrorCode::finalized, "transport finalized");
  return extract(m);
}

void Mailbox::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

void Mailbox::peer_closed(int rank) {
  {
    std::lock_guard lock(mutex_);
    closed_peers_.insert(rank);
  }
  cv_.notify_all();
}

bool Mailbox::is_peer_closed(int rank) const {
  std::lock_guard lock(mutex_);
  return closed_peers_.count(rank) > 0;
}

bool Mailbox::wait_peers_closed(const std::vector<int>& peers, std::chrono::steady_clock::time_point deadline) {
  std::unique_lock lock(mutex_);
  return cv_.wait_until(lock, deadline, [&] {
    return std::all_of(peers.begin(), peers.end(), [&](int r) { return closed_peers_.count(r) > 0; });
  });
}

std::size_t Mailbox::pending() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

}  // namespace packmp::detail
