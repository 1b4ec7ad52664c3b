#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hydroseg {

// Runtime failure carrying a stable machine-readable kind; what() has detail.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, const std::string& kind, const std::string& message) {
  if (!cond) fail(kind, message);
}

// Error kinds used across the library. Kept as named constants so callers can
// match on them without string typos.
namespace errkind {
inline constexpr const char* io = "io";
inline constexpr const char* png_format = "png_format";
inline constexpr const char* unsupported_bit_depth = "unsupported_bit_depth";
inline constexpr const char* unsupported_color_type = "unsupported_color_type";
inline constexpr const char* corrupt_stream = "corrupt_stream";
inline constexpr const char* non_binary_mask = "non_binary_mask";
inline constexpr const char* bad_argument = "bad_argument";
inline constexpr const char* shape_mismatch = "shape_mismatch";
inline constexpr const char* config = "config";
inline constexpr const char* checkpoint = "checkpoint";
}  // namespace errkind

}  // namespace hydroseg
