#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace packmp {

enum class ErrorCode {
  // typedesc
  syntax_error,
  duplicate_field,
  duplicate_type,
  unresolved_type,
  illegal_recursion,
  // pack
  schema_mismatch,
  unknown_type,
  truncated,
  malformed_variant_tag,
  malformed_bool,
  malformed_padding,
  length_overflow,
  nesting_too_deep,
  // transport
  already_initialized,
  rendezvous_timeout,
  rank_conflict,
  encoding_mismatch,
  self_send,
  invalid_rank,
  invalid_root,
  finalized,
  segment_count_mismatch,
  empty_subset,
  subset_mismatch,
  collective_aborted,
  disconnected,
  protocol_error,
  io_error,
  // msgbuf
  malformed_segment_table,
  // spmd
  already_active,
  static_initialization,
  // slave
  unknown_selector,
  handler_error,
  table_mismatch,
  no_idle_slave,
  no_outstanding,
  no_slaves,
  // launcher
  spawn_failure,
  invalid_argument,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(int line, int column, std::string expected);

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  int line_;
  int column_;
  std::string expected_;
};

class Truncated : public Error {
 public:
  Truncated(std::size_t needed, std::size_t available);

  std::size_t needed() const noexcept { return needed_; }
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t needed_;
  std::size_t available_;
};

class SegmentCountMismatch : public Error {
 public:
  SegmentCountMismatch(std::size_t expected, std::size_t found);

  std::size_t expected() const noexcept { return expected_; }
  std::size_t found() const noexcept { return found_; }

 private:
  std::size_t expected_;
  std::size_t found_;
};

/// Failure reported by a slave. `code()` is handler_error or
/// unknown_selector; `job()` is set when raised from run_joblist.
class HandlerError : public Error {
 public:
  HandlerError(ErrorCode code, int slave, std::string diagnostic,
               std::ptrdiff_t job = -1);

  int slave() const noexcept { return slave_; }
  const std::string& diagnostic() const noexcept { return diagnostic_; }
  std::ptrdiff_t job() const noexcept { return job_; }

 private:
  int slave_;
  std::string diagnostic_;
  std::ptrdiff_t job_;
};

}  // namespace packmp
