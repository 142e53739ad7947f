#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace deepmot {

// Contract violations (bad shapes, bad config) -> std::invalid_argument.
// Runtime failures (non-finite values, I/O, parse errors) -> std::runtime_error.
namespace detail {

[[noreturn]] inline void fail_invalid(const std::string& msg) {
  throw std::invalid_argument(msg);
}

[[noreturn]] inline void fail_runtime(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline void check(bool cond, const char* msg) {
  if (!cond) fail_invalid(msg);
}

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

}  // namespace detail
}  // namespace deepmot
