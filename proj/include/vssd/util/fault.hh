#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace vssd {

/// Raised on simulator logic errors (scheduling in the past, timestamp
/// inversion, accounting violations). The CLI maps this to exit code 2.
class SimFault : public std::runtime_error {
 public:
  explicit SimFault(const std::string& what) : std::runtime_error(what) {}
};

/// Raised on malformed user input (config files, traces). Exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void fault_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void fault_append(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  fault_append(os, rest...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void sim_fault(const Args&... args) {
  std::ostringstream os;
  detail::fault_append(os, args...);
  throw SimFault(os.str());
}

template <typename... Args>
void sim_check(bool ok, const Args&... args) {
  if (!ok) {
    sim_fault(args...);
  }
}

}  // namespace vssd
