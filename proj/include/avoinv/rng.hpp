#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace avoinv {

// Deterministic random stream. mt19937_64 has a fully specified output
// sequence, and the uniform/normal transforms below are fixed here rather
// than delegated to std distributions (whose algorithms are
// implementation-defined), so a seed reproduces the same draws everywhere.
class rng {
public:
  explicit rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so log(u1) is finite.
    double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  std::vector<double> normals(std::size_t n) {
    std::vector<double> out(n);
    for (double& x : out) x = normal();
    return out;
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Seed derivation used across the toolkit. Chains use
// master_seed + chain_index; auxiliary streams (problem generation,
// training data, tuning) use fixed offsets so runs are reproducible
// from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return master + index;
}

}  // namespace avoinv
