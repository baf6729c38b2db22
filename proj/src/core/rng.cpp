#include "ncdiff/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ncdiff {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::normal() {
  // u1 in (0,1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(gen_());  // full 64-bit range
  // Rejection sampling for an unbiased draw.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t r;
  do {
    r = gen_();
  } while (r >= limit);
  return lo + static_cast<int64_t>(r % span);
}

Rng Rng::fork(uint64_t tag) const {
  Rng copy = *this;
  uint64_t s = copy.gen_() ^ (tag * 0x9E3779B97F4A7C15ull);
  uint64_t seed = splitmix64(s);
  return Rng(seed);
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
}

void Rng::fill_normal(Tensor& t, double mean, double stddev) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
}

std::string Rng::state() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> gen_;
  if (is.fail()) throw std::runtime_error("Rng::set_state: malformed state string");
}

}  // namespace ncdiff
