#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ncdiff/image.hpp"

namespace ncdiff {

/// Overlapping patch grid for bounded-memory inference. Offsets advance by
/// patch - overlap and the last tile per axis is clamped to end exactly at
/// the image boundary, so every pixel is covered.
struct TilePlan {
  int64_t patch = 256;
  int64_t overlap = 64;
  std::vector<std::pair<int64_t, int64_t>> tiles;  // (y, x) top-left offsets, row-major
};

/// Requires patch > overlap >= 0 and h, w >= patch (callers route smaller
/// images around tiling entirely).
TilePlan plan_tiles(int64_t h, int64_t w, int64_t patch, int64_t overlap);

/// Separable blending weight along one patch axis: flat 1 in the interior,
/// linear ramp down to 1/(overlap+1) over the overlap margin at each end.
/// Strictly positive so normalization is always well defined.
double tile_weight(int64_t u, int64_t patch, int64_t overlap);

struct TileResult {
  int64_t y = 0;
  int64_t x = 0;
  Image patch;
};

/// Weighted cross-fade of per-tile results back into an h x w image. The
/// normalized weight field sums to exactly one per pixel, so identical
/// constant tiles reproduce that constant. A pixel no tile covers is a plan
/// violation and throws.
Image blend(const std::vector<TileResult>& tiles, int64_t h, int64_t w, const TilePlan& plan);

using TileInferFn = std::function<Image(const Image&)>;

/// Runs infer_fn on every planned patch and blends. Tiles are processed in
/// plan order; per-tile failures are rethrown with the tile offset attached.
Image tiled_infer(const Image& i_term, const TilePlan& plan, const TileInferFn& infer_fn);

/// Convenience wrapper: images smaller than the patch on either axis bypass
/// tiling and go through infer_fn whole.
Image tiled_infer(const Image& i_term, int64_t patch, int64_t overlap, const TileInferFn& infer_fn);

}  // namespace ncdiff
