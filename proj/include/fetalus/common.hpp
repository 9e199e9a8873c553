#pragma once
// Shared error types, deterministic RNG helpers, and small utilities.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fetalus {

// Invalid input that violates an operation's precondition.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/array dimensions do not line up.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// An internal invariant (e.g. unit-norm inputs) was violated by the caller.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Bad configuration file or incompatible settings.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG. Draws are defined in-library (not via std distributions)
// so sequences are stable across standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo bias is negligible for n << 2^64.
    return n == 0 ? 0 : engine_() % n;
  }

  double normal(double mean, double stddev) {
    // Box-Muller, one value per call (the spare is discarded for simplicity).
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
  }

  // Truncated normal used for parameter init: resample until |z| <= 2 sigma.
  double trunc_normal(double mean, double stddev) {
    for (int i = 0; i < 64; ++i) {
      double z = normal(0.0, 1.0);
      if (std::abs(z) <= 2.0) return mean + stddev * z;
    }
    return mean;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stable seed derivation for nested deterministic jobs:
// (master, stream ids...) -> child seed.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> stream) {
  std::uint64_t h = master ^ 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t s : stream) {
    h ^= s + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
  }
  return h;
}

// FNV-1a content hash used for artifact manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path);
std::string to_hex(std::uint64_t h);

// Gestational age rendered in the clinical weeks+days convention,
// e.g. 140 -> "20w 0d".
std::string format_ga_weeks_days(int ga_days);

// Shortest decimal that round-trips, e.g. 0.70 -> "0.7".
std::string format_number(double v);

}  // namespace fetalus
