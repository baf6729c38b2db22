#pragma once

#include <cstdint>
#include <vector>

#include "ncdiff/image.hpp"
#include "ncdiff/rng.hpp"

namespace ncdiff {

/// Deterministic synthetic test image: smooth background gradient, a few
/// hard-edged shapes (rectangles and disks), and a low-amplitude sinusoid
/// texture. The shape boundaries give codecs something to fail on, which
/// is exactly what the residual-noise analysis needs.
Image synth_textured(int64_t h, int64_t w, int64_t channels, Rng& rng);

/// A batch of textured crops as raw tensors (unit range), convenient for
/// training loops.
std::vector<Tensor> synth_crops(int64_t count, int64_t h, int64_t w, int64_t channels, Rng& rng);

}  // namespace ncdiff
