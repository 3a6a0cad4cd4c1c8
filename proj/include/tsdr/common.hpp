#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tsdr {

inline constexpr const char* kVersion = "1.0.0";

inline constexpr double kPi = 3.14159265358979323846;

/// Library-wide error type. Thrown on contract violations (bad configs,
/// malformed inputs, missing files); messages carry enough context to locate
/// the offending record or path.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

/// FNV-1a over raw bytes. Used for run-manifest checksums and the
/// frozen-weights contract; not cryptographic.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return fnv1a64(&v, sizeof(v), h);
}

inline std::uint64_t hash_combine(std::uint64_t h, const std::string& s) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace tsdr
