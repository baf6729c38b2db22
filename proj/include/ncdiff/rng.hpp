#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Deterministic random source. Distribution mappings are implemented here
/// (not via std:: distributions, whose outputs are implementation-defined)
/// so that a seed reproduces the same stream on any standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached spare; two draws per sample).
  double normal();

  /// Uniform integer on [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  /// Derived stream: decorrelates sub-purposes (quantizer noise, timestep
  /// draws, shuffling) from one master seed.
  Rng fork(uint64_t tag) const;

  void fill_uniform(Tensor& t, double lo = 0.0, double hi = 1.0);
  void fill_normal(Tensor& t, double mean = 0.0, double stddev = 1.0);

  /// Engine state round-trip for resumable training.
  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

/// SplitMix64 step; used for seed derivation.
uint64_t splitmix64(uint64_t& x);

}  // namespace ncdiff
