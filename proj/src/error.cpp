#include "packmp/error.hpp"

namespace packmp {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::syntax_error: return "SyntaxError";
    case ErrorCode::duplicate_field: return "DuplicateField";
    case ErrorCode::duplicate_type: return "DuplicateType";
    case ErrorCode::unresolved_type: return "UnresolvedType";
    case ErrorCode::illegal_recursion: return "IllegalRecursion";
    case ErrorCode::schema_mismatch: return "SchemaMismatch";
    case ErrorCode::unknown_type: return "UnknownType";
    case ErrorCode::truncated: return "Truncated";
    case ErrorCode::malformed_variant_tag: return "MalformedVariantTag";
    case ErrorCode::malformed_bool: return "MalformedBool";
    case ErrorCode::malformed_padding: return "MalformedPadding";
    case ErrorCode::length_overflow: return "LengthOverflow";
    case ErrorCode::nesting_too_deep: return "NestingTooDeep";
    case ErrorCode::already_initialized: return "AlreadyInitialized";
    case ErrorCode::rendezvous_timeout: return "RendezvousTimeout";
    case ErrorCode::rank_conflict: return "RankConflict";
    case ErrorCode::encoding_mismatch: return "EncodingMismatch";
    case ErrorCode::self_send: return "SelfSend";
    case ErrorCode::invalid_rank: return "InvalidRank";
    case ErrorCode::invalid_root: return "InvalidRoot";
    case ErrorCode::finalized: return "Finalized";
    case ErrorCode::segment_count_mismatch: return "SegmentCountMismatch";
    case ErrorCode::empty_subset: return "EmptySubset";
    case ErrorCode::subset_mismatch: return "SubsetMismatch";
    case ErrorCode::collective_aborted: return "CollectiveAborted";
    case ErrorCode::disconnected: return "Disconnected";
    case ErrorCode::protocol_error: return "ProtocolError";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::malformed_segment_table: return "MalformedSegmentTable";
    case ErrorCode::already_active: return "AlreadyActive";
    case ErrorCode::static_initialization: return "StaticInitialization";
    case ErrorCode::unknown_selector: return "UnknownSelector";
    case ErrorCode::handler_error: return "HandlerError";
    case ErrorCode::table_mismatch: return "TableMismatch";
    case ErrorCode::no_idle_slave: return "NoIdleSlave";
    case ErrorCode::no_outstanding: return "NoOutstanding";
    case ErrorCode::no_slaves: return "NoSlaves";
    case ErrorCode::spawn_failure: return "SpawnFailure";
    case ErrorCode::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

SyntaxError::SyntaxError(int line, int column, std::string expected)
    : Error(ErrorCode::syntax_error,
            std::to_string(line) + ":" + std::to_string(column) +
                ": expected " + expected),
      line_(line),
      column_(column),
      expected_(std::move(expected)) {}

Truncated::Truncated(std::size_t needed, std::size_t available)
    : Error(ErrorCode::truncated, "truncated buffer: needed " +
                                      std::to_string(needed) + " bytes, " +
                                      std::to_string(available) + " available"),
      needed_(needed),
      available_(available) {}

SegmentCountMismatch::SegmentCountMismatch(std::size_t expected,
                                           std::size_t found)
    : Error(ErrorCode::segment_count_mismatch,
            "segment count mismatch: expected " + std::to_string(expected) +
                ", found " + std::to_string(found)),
      expected_(expected),
      found_(found) {}

HandlerError::HandlerError(ErrorCode code, int slave, std::string diagnostic,
                           std::ptrdiff_t job)
    : Error(code, "slave " + std::to_string(slave) +
                      (job >= 0 ? " (job " + std::to_string(job) + ")" : "") +
                      ": " + diagnostic),
      slave_(slave),
      diagnostic_(std::move(diagnostic)),
      job_(job) {}

}  // namespace packmp
