#pragma once

#include <string>

#include "ncdiff/image.hpp"

namespace ncdiff {

/// Reads a PNG into a unit-range image. Grayscale stays single channel;
/// palette images are expanded to RGB; an alpha channel, if present, is
/// dropped. 8- and 16-bit depths are supported and normalized by the
/// nominal maximum of their depth.
Image read_png(const std::string& path);

/// Writes a unit-range image as 8-bit PNG (gray or RGB). Values are clamped
/// to [0,1] and quantized with round-half-away-from-zero so the file is
/// deterministic across platforms. Signed-range input is converted first.
void write_png(const std::string& path, const Image& img);

}  // namespace ncdiff
