#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace defex {

// 64-bit FNV-1a. Used for content hashes in manifests and cache headers.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(uint64_t v);

// FNV-1a over a whole file's bytes. Throws defex::Error if unreadable.
uint64_t hash_file(const std::string& path);

std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split_on(std::string_view s, char sep);
std::string trim(std::string_view s);
std::string lowercase_ascii(std::string_view s);

// "760/1250" -> "60.8%" (one decimal place).
std::string format_percent(long num, long den);

// Bounded draw in [0, n) from the generator, independent of the standard
// library's distribution internals so sequences are stable everywhere.
inline uint64_t bounded_rand(std::mt19937_64& rng, uint64_t n) {
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

// Fisher-Yates with bounded_rand; deterministic for a given seed across
// platforms, unlike std::shuffle.
template <typename T>
void shuffle_deterministic(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(bounded_rand(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// Uniform double in [lo, hi) built from raw generator output.
inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

}  // namespace defex
