#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace gin {

// Mixes a base seed with a stream index (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Seeded random source whose full state can be saved and restored.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  // Inclusive bounds.
  int uniform_int(int lo, int hi);
  std::size_t index(std::size_t n);
  bool bernoulli(double p);

  std::string state() const;
  void set_state(const std::string& s);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gin
