#include "packmp/spmd.hpp"

#include <atomic>

#include "packmp/error.hpp"

namespace packmp {

namespace {

// Dynamic initializer of this object runs after those of objects linked
// before the library, i.e. after the program's own globals.
bool g_started = false;
struct StartMarker {
  StartMarker() { g_started = true; }
} g_start_marker;

std::atomic<bool> g_entered{false};

[[noreturn]] void already_active() {
  throw Error(ErrorCode::already_active, "an Spmd scope was already entered here");
}

}  // namespace

bool main_started() noexcept { return g_started; }

Spmd::Spmd(const WorldConfig& config) {
  if (!main_started())
    throw Error(ErrorCode::static_initialization,
                "Spmd constructed during static initialization; create it inside main");
  const bool shared_slot = config.backend == Backend::in_process && config.world;
  if (shared_slot) {
    // The world's own slot claim enforces once-per-rank.
    try {
      ctx_ = init(config);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::already_initialized) already_active();
      throw;
    }
  } else {
    if (g_entered.exchange(true)) already_active();
    ctx_ = init(config);
  }
  myid_ = ctx_->rank();
  nprocs_ = ctx_->size();
  active_ = true;
}

Spmd::Spmd(int, char**) : Spmd(WorldConfig::from_environment()) {}

Spmd::~Spmd() { exit(); }

void Spmd::exit() noexcept {
  if (!active_) return;
  active_ = false;
  try {
    ctx_->finalize();
  } catch (...) {
  }
}

}  // namespace packmp
