#include "packmp/slave.hpp"

#include <cctype>

#include "packmp/error.hpp"

namespace packmp {

namespace {

enum ReplyStatus : std::uint8_t { kOk = 0, kHandlerFailed = 1, kUnknownSelector = 2 };

void reply(Context& ctx, std::uint8_t status, std::span<const std::uint8_t> body) {
  Bytes frame;
  frame.reserve(body.size() + 1);
  frame.push_back(status);
  frame.insert(frame.end(), body.begin(), body.end());
  ctx.send(ctx.world(), 0, kFarmTag, frame);
}

void reply(Context& ctx, std::uint8_t status, const std::string& text) {
  reply(ctx, status, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool is_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

}  // namespace

HandlerTable& HandlerTable::add(std::string name, Handler handler) {
  if (!is_identifier(name)) throw Error(ErrorCode::invalid_argument, "handler name '" + name + "' is not an identifier");
  if (index_of(name)) throw Error(ErrorCode::invalid_argument, "handler '" + name + "' registered twice");
  entries_.emplace_back(std::move(name), std::move(handler));
  return *this;
}

std::optional<std::uint32_t> HandlerTable::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first == name) return static_cast<std::uint32_t>(i);
  return std::nullopt;
}

std::uint64_t HandlerTable::digest() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (const auto& [name, handler] : entries_) {
    for (char c : name) mix(static_cast<std::uint8_t>(c));
    mix(0);
  }
  return h;
}

std::size_t slave_loop(Context& ctx, const HandlerTable& table) {
  if (ctx.rank() == 0) throw Error(ErrorCode::invalid_argument, "rank 0 is the master, not a slave");
  const Communicator& world = ctx.world();

  Bytes digest(8);
  detail::store_be64(digest.data(), table.digest());
  ctx.send(world, 0, kFarmTag, digest);
  Message ack = ctx.recv(world, 0, kFarmTag);
  if (ack.payload.size() != 1 || ack.payload[0] != 0)
    throw Error(ErrorCode::table_mismatch, "handler table differs from the master's");

  std::size_t served = 0;
  for (;;) {
    Message m = ctx.recv(world, 0, kFarmTag);
    if (m.payload.size() < 4) {
      reply(ctx, kHandlerFailed, std::string("request shorter than a selector"));
      ++served;
      continue;
    }
    std::uint32_t selector = detail::load_be32(m.payload.data());
    if (selector == kStop) return served;
    ++served;
    if (selector >= table.size()) {
      reply(ctx, kUnknownSelector, "unknown selector " + std::to_string(selector));
      continue;
    }
    MsgBuf args(ctx);
    args.assign(Bytes(m.payload.begin() + 4, m.payload.end()));
    try {
      table.handler(selector)(args);
    } catch (const std::exception& e) {
      reply(ctx, kHandlerFailed, table.name(selector) + ": " + e.what());
      continue;
    } catch (...) {
      reply(ctx, kHandlerFailed, table.name(selector) + ": unknown exception");
      continue;
    }
    reply(ctx, kOk, args.data());
  }
}

Master::Master(Context& ctx, const HandlerTable& table) : ctx_(&ctx), table_(&table) {
  if (ctx.rank() != 0) throw Error(ErrorCode::invalid_argument, "the master runs on rank 0");
  const Communicator& world = ctx.world();
  std::vector<int> mismatched;
  for (int r = 1; r < ctx.size(); ++r) {
    Message m = ctx.recv(world, r, kFarmTag);
    if (m.payload.size() != 8 || detail::load_be64(m.payload.data()) != table.digest()) mismatched.push_back(r);
  }
  const Bytes ack{static_cast<std::uint8_t>(mismatched.empty() ? 0 : 1)};
  for (int r = 1; r < ctx.size(); ++r) ctx.send(world, r, kFarmTag, ack);
  if (!mismatched.empty()) {
    stopped_ = true;
    std::string who;
    for (int r : mismatched) who += (who.empty() ? "" : ", ") + std::to_string(r);
    throw Error(ErrorCode::table_mismatch, "handler table differs on slave rank(s) " + who);
  }
  for (int r = 1; r < ctx.size(); ++r) idle_.insert(r);
}

Master::~Master() { shutdown(); }

MsgBuf Master::request(std::string_view selector) const {
  auto index = table_->index_of(selector);
  if (!index) throw Error(ErrorCode::unknown_selector, "no handler named '" + std::string(selector) + "'");
  return request(*index);
}

MsgBuf Master::request(std::uint32_t selector) const {
  MsgBuf buf(*ctx_);
  buf.put_be32(selector);
  return buf;
}

int Master::exec(MsgBuf& request) {
  if (nslaves() == 0) throw Error(ErrorCode::no_slaves, "world has no slaves");
  if (idle_.empty()) throw Error(ErrorCode::no_idle_slave, "every slave is busy; collect a reply first");
  int slave = *idle_.begin();
  request.set_comm(ctx_->world());
  request.send_to(slave, kFarmTag);
  idle_.erase(idle_.begin());
  busy_.insert(slave);
  return slave;
}

std::pair<int, MsgBuf> Master::get_returnv() {
  if (busy_.empty()) throw Error(ErrorCode::no_outstanding, "no request awaiting a reply");
  MsgBuf buf(*ctx_);
  buf.get(any_source, kFarmTag);
  int slave = *buf.last_source();
  if (!busy_.erase(slave)) throw Error(ErrorCode::protocol_error, "reply from idle slave " + std::to_string(slave));
  idle_.insert(slave);

  auto data = buf.data();
  if (data.empty()) throw Error(ErrorCode::protocol_error, "empty reply from slave " + std::to_string(slave));
  std::uint8_t status = data[0];
  Bytes body(data.begin() + 1, data.end());
  if (status != kOk) {
    std::string text(body.begin(), body.end());
    throw HandlerError(status == kUnknownSelector ? ErrorCode::unknown_selector : ErrorCode::handler_error, slave,
                       std::move(text));
  }
  buf.assign(std::move(body));
  return {slave, std::move(buf)};
}

std::vector<MsgBuf> Master::run_joblist(std::string_view selector, const std::vector<Bytes>& jobs) {
  if (nslaves() == 0) throw Error(ErrorCode::no_slaves, "world has no slaves");
  const std::uint32_t index = [&] {
    auto i = table_->index_of(selector);
    if (!i) throw Error(ErrorCode::unknown_selector, "no handler named '" + std::string(selector) + "'");
    return *i;
  }();

  std::vector<std::optional<MsgBuf>> replies(jobs.size());
  std::vector<std::ptrdiff_t> job_of(static_cast<std::size_t>(ctx_->size()), -1);
  std::size_t next = 0;

  auto dispatch = [&] {
    MsgBuf req = request(index);
    req.append_raw(jobs[next]);
    int slave = exec(req);
    job_of[static_cast<std::size_t>(slave)] = static_cast<std::ptrdiff_t>(next++);
  };
  auto harvest = [&] {
    std::ptrdiff_t job = -1;
    try {
      auto [slave, reply] = get_returnv();
      job = job_of[static_cast<std::size_t>(slave)];
      replies[static_cast<std::size_t>(job)] = std::move(reply);
    } catch (const HandlerError& e) {
      throw HandlerError(e.code(), e.slave(), e.diagnostic(), job_of[static_cast<std::size_t>(e.slave())]);
    }
  };

  while (next < jobs.size() && !idle_.empty()) dispatch();
  while (next < jobs.size()) {
    harvest();
    dispatch();
  }
  while (!all_idle()) harvest();

  std::vector<MsgBuf> out;
  out.reserve(jobs.size());
  for (auto& r : replies) out.push_back(std::move(*r));
  return out;
}

void Master::shutdown() noexcept {
  if (stopped_) return;
  stopped_ = true;
  try {
    while (!busy_.empty()) {
      try {
        get_returnv();
      } catch (const HandlerError&) {
      }
    }
  } catch (...) {
    // Transport gone; slaves will see the disconnect instead.
    return;
  }
  Bytes stop(4);
  detail::store_be32(stop.data(), kStop);
  for (int r = 1; r < ctx_->size(); ++r) {
    try {
      ctx_->send(ctx_->world(), r, kFarmTag, stop);
    } catch (...) {
    }
  }
}

}  // namespace packmp
