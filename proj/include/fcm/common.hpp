#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace fcm {

// Exit-code-mapped error categories (see tools/fcm_main.cpp).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All randomness flows from one root seed through named substreams so that
// e.g. data generation and sampling stay reproducible independently.
inline std::uint64_t substream_seed(std::uint64_t root, const std::string& name) {
  // FNV-1a over the name, mixed with the root seed (splitmix64 finalizer).
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = root + 0x9e3779b97f4a7c15ull * h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t root, const std::string& name) {
  return std::mt19937_64(substream_seed(root, name));
}

}  // namespace fcm
