#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncdiff/image.hpp"
#include "ncdiff/rng.hpp"

namespace ncdiff {

/// An image directory prepared for training or evaluation: the PNG files
/// under `root` that decode successfully and are at least `crop` pixels on
/// both sides, in an order that is a pure function of the listing seed.
struct DatasetManifest {
  std::string root;
  std::string split;
  int64_t crop = 64;
  std::vector<std::string> files;  // names relative to root

  std::string path(size_t i) const;
};

/// Scans `root` (non-recursive) for *.png, drops files that fail to decode
/// or are smaller than the crop, sorts by name, then shuffles with `seed`.
/// Undecodable files are skipped with a logged warning, not an error.
DatasetManifest build_manifest(const std::string& root, int64_t crop, const std::string& split, uint64_t seed);

/// read_png plus channel adaptation: replicates gray to RGB, averages RGB
/// to gray. Other channel counts are rejected.
Image load_image_channels(const std::string& path, int64_t channels);

/// Uniform random crop window; returns the unit-range pixels [c, crop, crop].
Tensor random_crop(const Image& img, int64_t crop, Rng& rng);

/// `count` random crops drawn by cycling the manifest order. All randomness
/// comes from `rng`, so a fixed state reproduces the exact crop set.
std::vector<Tensor> load_crop_set(const DatasetManifest& manifest, int64_t channels, int64_t count, Rng& rng);

}  // namespace ncdiff
