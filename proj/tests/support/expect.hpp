#pragma once

// Include after doctest.h.

#include "packmp/error.hpp"

namespace packmp::testing {

/// Code of the packmp::Error `fn` throws; fails the test if it returns.
template <class F>
ErrorCode code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::invalid_argument;
}

}  // namespace packmp::testing
