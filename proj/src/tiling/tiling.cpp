#include "ncdiff/tiling.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncdiff {

namespace {

std::vector<int64_t> axis_offsets(int64_t dim, int64_t patch, int64_t stride) {
  std::vector<int64_t> offs;
  int64_t pos = 0;
  while (true) {
    if (pos + patch >= dim) {
      offs.push_back(dim - patch);  // clamp: the loop guarantees no duplicate
      break;
    }
    offs.push_back(pos);
    pos += stride;
  }
  return offs;
}

}  // namespace

TilePlan plan_tiles(int64_t h, int64_t w, int64_t patch, int64_t overlap) {
  if (patch <= 0 || overlap < 0 || patch <= overlap)
    throw std::invalid_argument("plan_tiles: needs patch > overlap >= 0, got patch = " +
                                std::to_string(patch) + ", overlap = " + std::to_string(overlap));
  if (h < patch || w < patch)
    throw std::invalid_argument("plan_tiles: image " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than the patch; bypass tiling instead");
  TilePlan plan;
  plan.patch = patch;
  plan.overlap = overlap;
  const int64_t stride = patch - overlap;
  for (int64_t y : axis_offsets(h, patch, stride))
    for (int64_t x : axis_offsets(w, patch, stride)) plan.tiles.emplace_back(y, x);
  return plan;
}

double tile_weight(int64_t u, int64_t patch, int64_t overlap) {
  const double ramp = static_cast<double>(overlap) + 1.0;
  const double up = (static_cast<double>(u) + 1.0) / ramp;
  const double down = static_cast<double>(patch - u) / ramp;
  return std::min(1.0, std::min(up, down));
}

Image blend(const std::vector<TileResult>& tiles, int64_t h, int64_t w, const TilePlan& plan) {
  if (tiles.empty()) throw std::invalid_argument("blend: no tiles");
  const int64_t c = tiles.front().patch.data.dim(0);
  const Range range = tiles.front().patch.range;
  const int64_t p = plan.patch;

  std::vector<double> wline(static_cast<size_t>(p));
  for (int64_t u = 0; u < p; ++u) wline[static_cast<size_t>(u)] = tile_weight(u, p, plan.overlap);

  Tensor acc({c, h, w});
  Tensor wsum({1, h, w});
  for (const TileResult& tile : tiles) {
    const Tensor& td = tile.patch.data;
    if (td.ndim() != 3 || td.dim(0) != c || td.dim(1) != p || td.dim(2) != p)
      throw std::invalid_argument("blend: tile at (" + std::to_string(tile.y) + ", " +
                                  std::to_string(tile.x) + ") has shape " + td.shape_str() +
                                  ", expected " + std::to_string(c) + "x" + std::to_string(p) + "x" +
                                  std::to_string(p));
    if (tile.y < 0 || tile.x < 0 || tile.y + p > h || tile.x + p > w)
      throw std::invalid_argument("blend: tile at (" + std::to_string(tile.y) + ", " +
                                  std::to_string(tile.x) + ") falls outside the image");
    for (int64_t py = 0; py < p; ++py) {
      const double wy = wline[static_cast<size_t>(py)];
      for (int64_t px = 0; px < p; ++px) {
        const double wgt = wy * wline[static_cast<size_t>(px)];
        wsum.at(0, tile.y + py, tile.x + px) += wgt;
        for (int64_t ch = 0; ch < c; ++ch)
          acc.at(ch, tile.y + py, tile.x + px) += wgt * td.at(ch, py, px);
      }
    }
  }

  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double total = wsum.at(0, y, x);
      if (total <= 0.0)
        throw std::logic_error("blend: coverage gap at (" + std::to_string(y) + ", " +
                               std::to_string(x) + "); the plan violated its invariant");
      for (int64_t ch = 0; ch < c; ++ch) acc.at(ch, y, x) /= total;
    }
  return Image(std::move(acc), range);
}

Image tiled_infer(const Image& i_term, const TilePlan& plan, const TileInferFn& infer_fn) {
  const int64_t c = i_term.data.dim(0), h = i_term.data.dim(1), w = i_term.data.dim(2);
  const int64_t p = plan.patch;
  std::vector<TileResult> results;
  results.reserve(plan.tiles.size());
  for (const auto& [y, x] : plan.tiles) {
    Tensor patch({c, p, p});
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t py = 0; py < p; ++py)
        for (int64_t px = 0; px < p; ++px) patch.at(ch, py, px) = i_term.data.at(ch, y + py, x + px);
    Image out;
    try {
      out = infer_fn(Image(std::move(patch), i_term.range));
    } catch (const std::exception& e) {
      throw std::runtime_error("tile at (" + std::to_string(y) + ", " + std::to_string(x) +
                               "): " + e.what());
    }
    results.push_back(TileResult{y, x, std::move(out)});
  }
  return blend(results, h, w, plan);
}

Image tiled_infer(const Image& i_term, int64_t patch, int64_t overlap, const TileInferFn& infer_fn) {
  const int64_t h = i_term.data.dim(1), w = i_term.data.dim(2);
  if (h < patch || w < patch) return infer_fn(i_term);
  return tiled_infer(i_term, plan_tiles(h, w, patch, overlap), infer_fn);
}

}  // namespace ncdiff
