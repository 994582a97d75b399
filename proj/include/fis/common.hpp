#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fis {

// Error type for all precondition/IO failures raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& value, const Rest&... rest) {
  os << value;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string str_cat(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(str_cat(args...));
}

}  // namespace fis

#define FIS_CHECK(cond, ...)                                       \
  do {                                                             \
    if (!(cond)) {                                                 \
      ::fis::fail("check failed (", #cond, "): ", __VA_ARGS__);    \
    }                                                              \
  } while (0)
