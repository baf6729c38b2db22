#pragma once

#include <complex>
#include <vector>

namespace ncdiff {

/// 2-D complex FFT of a real h*w array (row-major). Forward, unscaled.
void fft2(const double* in, std::complex<double>* out, int64_t h, int64_t w);

/// 2-D complex FFT, forward (unscaled) or inverse (scaled by 1/(h*w)).
void fft2c(const std::complex<double>* in, std::complex<double>* out, int64_t h, int64_t w, bool inverse);

/// Real part of the 2-D inverse FFT (scaled). `max_imag` (optional) receives
/// the largest imaginary residue, which callers may assert on.
void ifft2_real(const std::complex<double>* in, double* out, int64_t h, int64_t w, double* max_imag = nullptr);

}  // namespace ncdiff
