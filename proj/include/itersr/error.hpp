#pragma once

#include <stdexcept>
#include <string>

namespace itersr {

/// Raised on every contract violation in the library. The message is the
/// user-facing diagnostic; the CLI prints it verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace itersr
