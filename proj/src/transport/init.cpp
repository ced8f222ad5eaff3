#include <atomic>
#include <cstdlib>

#include "packmp/error.hpp"
#include "transport/internal.hpp"

namespace packmp {

namespace {

std::atomic<bool> g_process_initialized{false};

void claim_process() {
  if (g_process_initialized.exchange(true))
    throw Error(ErrorCode::already_initialized, "transport already initialized in this process");
}

class InProcessLink final : public detail::Link {
 public:
  InProcessLink(std::shared_ptr<InProcessWorld> world, int rank) : world_(std::move(world)), rank_(rank) {}

  void deliver(int dest, detail::Envelope e) override { world_->mailbox(dest)->push(std::move(e)); }

  void shutdown(detail::Mailbox&, std::chrono::milliseconds) override {
    for (int r = 0; r < world_->size(); ++r)
      if (r != rank_) world_->mailbox(r)->peer_closed(rank_);
  }

 private:
  std::shared_ptr<InProcessWorld> world_;
  int rank_;
};

std::unique_ptr<Context> make_in_process(const std::shared_ptr<InProcessWorld>& world, int rank,
                                         std::chrono::milliseconds linger) {
  return detail::ContextAccess::make(rank, world->size(), world->encoding(), Backend::in_process,
                                     world->mailbox(rank), detail::make_in_process_link(world, rank), linger);
}

int env_int(const char* name, const char* value) {
  char* end = nullptr;
  long v = std::strtol(value, &end, 10);
  if (end == value || *end != '\0' || v < 0 || v > 1 << 20)
    throw Error(ErrorCode::invalid_argument, std::string(name) + " is not a valid number: '" + value + "'");
  return static_cast<int>(v);
}

}  // namespace

namespace detail {
std::unique_ptr<Link> make_in_process_link(std::shared_ptr<InProcessWorld> world, int rank) {
  return std::make_unique<InProcessLink>(std::move(world), rank);
}
}  // namespace detail

InProcessWorld::InProcessWorld(int nprocs, Encoding encoding)
    : claimed_(std::make_unique<std::atomic<bool>[]>(static_cast<std::size_t>(nprocs))), encoding_(encoding) {
  for (int i = 0; i < nprocs; ++i) mailboxes_.push_back(std::make_shared<detail::Mailbox>());
}

std::shared_ptr<InProcessWorld> InProcessWorld::create(int nprocs, Encoding encoding) {
  if (nprocs < 1) throw Error(ErrorCode::invalid_argument, "nprocs must be at least 1");
  return std::shared_ptr<InProcessWorld>(new InProcessWorld(nprocs, encoding));
}

WorldConfig WorldConfig::from_environment() {
  WorldConfig c;
  const char* rank = std::getenv("PACKRUN_RANK");
  const char* nprocs = std::getenv("PACKRUN_NPROCS");
  const char* coord = std::getenv("PACKRUN_COORD");
  if (!rank || !nprocs || !coord) return c;
  c.backend = Backend::socket_mesh;
  c.rank = env_int("PACKRUN_RANK", rank);
  c.nprocs = env_int("PACKRUN_NPROCS", nprocs);
  c.coordinator = coord;
  if (const char* hetero = std::getenv("PACKRUN_HETERO"); hetero && std::string(hetero) == "1")
    c.encoding = Encoding::portable;
  if (const char* t = std::getenv("PACKRUN_TIMEOUT_MS")) c.timeout = std::chrono::milliseconds(env_int("PACKRUN_TIMEOUT_MS", t));
  return c;
}

std::unique_ptr<Context> init(const WorldConfig& config) {
  if (config.nprocs < 1) throw Error(ErrorCode::invalid_argument, "nprocs must be at least 1");
  if (config.backend == Backend::socket_mesh) {
    claim_process();
    return detail::init_socket_mesh(config);
  }
  if (config.world) {
    int rank = config.rank.value_or(-1);
    if (rank < 0 || rank >= config.world->size())
      throw Error(ErrorCode::invalid_argument, "in-process rank outside the shared world");
    if (!config.world->claim(rank))
      throw Error(ErrorCode::already_initialized, "rank " + std::to_string(rank) + " already initialized");
    return make_in_process(config.world, rank, config.linger);
  }
  if (config.nprocs != 1 || config.rank.value_or(0) != 0)
    throw Error(ErrorCode::invalid_argument, "a multi-rank in-process world needs a shared InProcessWorld");
  claim_process();
  auto world = InProcessWorld::create(1, config.encoding);
  world->claim(0);
  return make_in_process(world, 0, config.linger);
}

std::vector<std::unique_ptr<Context>> init_in_process(int nprocs, Encoding encoding) {
  auto world = InProcessWorld::create(nprocs, encoding);
  std::vector<std::unique_ptr<Context>> out;
  for (int r = 0; r < nprocs; ++r) {
    world->claim(r);
    out.push_back(make_in_process(world, r, std::chrono::milliseconds(0)));
  }
  return out;
}

}  // namespace packmp
