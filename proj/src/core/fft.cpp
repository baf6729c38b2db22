#include "ncdiff/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace ncdiff {

namespace {

// FFTW plan creation is not thread-safe; execution via the new-array API is.
// Plans are created once per (h, w, direction) with FFTW_UNALIGNED so they
// can execute on arbitrary caller buffers.
class PlanCache {
 public:
  fftw_plan get(int64_t h, int64_t w, bool inverse) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(h, w, inverse);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    // Plans are out-of-place; fft2c copies when the caller aliases buffers.
    std::vector<std::complex<double>> din(static_cast<size_t>(h * w));
    std::vector<std::complex<double>> dout(static_cast<size_t>(h * w));
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w),
                                   reinterpret_cast<fftw_complex*>(din.data()),
                                   reinterpret_cast<fftw_complex*>(dout.data()),
                                   inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<int64_t, int64_t, bool>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

void fft2c(const std::complex<double>* in, std::complex<double>* out, int64_t h, int64_t w, bool inverse) {
  fftw_plan p = cache().get(h, w, inverse);
  if (in == out) {
    std::vector<std::complex<double>> copy(in, in + h * w);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(copy.data()), reinterpret_cast<fftw_complex*>(out));
  } else {
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(h * w);
    for (int64_t i = 0; i < h * w; ++i) out[i] *= inv;
  }
}

void fft2(const double* in, std::complex<double>* out, int64_t h, int64_t w) {
  std::vector<std::complex<double>> tmp(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) tmp[static_cast<size_t>(i)] = std::complex<double>(in[i], 0.0);
  fft2c(tmp.data(), out, h, w, /*inverse=*/false);
}

void ifft2_real(const std::complex<double>* in, double* out, int64_t h, int64_t w, double* max_imag) {
  std::vector<std::complex<double>> tmp(static_cast<size_t>(h * w));
  fft2c(in, tmp.data(), h, w, /*inverse=*/true);
  double mi = 0.0;
  for (int64_t i = 0; i < h * w; ++i) {
    out[i] = tmp[static_cast<size_t>(i)].real();
    mi = std::max(mi, std::abs(tmp[static_cast<size_t>(i)].imag()));
  }
  if (max_imag) *max_imag = mi;
}

}  // namespace ncdiff
