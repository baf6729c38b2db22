#pragma once

#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Declared value range of an image tensor. `kUnit` is the external [0,1]
/// representation used at codec and file boundaries; `kSigned` is the
/// internal [-1,1] diffusion representation.
enum class Range { kUnit, kSigned };

/// Floating-point C*H*W picture. C is 1 or 3; values live in the declared
/// range. Clamping happens at I/O boundaries only, never inside the
/// diffusion loop, so intermediate signed images may transiently exceed
/// the range.
struct Image {
  Tensor data;  // [C,H,W]
  Range range = Range::kUnit;

  Image() = default;
  Image(Tensor t, Range r) : data(std::move(t)), range(r) {}
  static Image unit(int64_t c, int64_t h, int64_t w) { return Image(Tensor({c, h, w}), Range::kUnit); }
  static Image signed_(int64_t c, int64_t h, int64_t w) { return Image(Tensor({c, h, w}), Range::kSigned); }

  int64_t channels() const { return data.dim(0); }
  int64_t height() const { return data.dim(1); }
  int64_t width() const { return data.dim(2); }
};

/// [0,1] -> [-1,1], exact affine map.
Image to_signed(const Image& img);

/// [-1,1] -> [0,1], exact affine map; `clamp` applies the boundary clamp.
Image to_unit(const Image& img, bool clamp);

/// Throws unless C in {1,3} and H,W >= 16.
void validate_image(const Image& img);

/// Reflection padding (no edge duplication, "reflect" mode). Pads on the
/// bottom/right only; pad amounts must be < the corresponding dimension.
Tensor pad_reflect(const Tensor& x, int64_t pad_h, int64_t pad_w);

/// Adjoint of pad_reflect: folds gradient contributions from padded
/// positions back onto their source pixels.
Tensor pad_reflect_adjoint(const Tensor& g, int64_t orig_h, int64_t orig_w);

/// Crop a [C,H,W] tensor to its top-left h*w corner.
Tensor crop(const Tensor& x, int64_t h, int64_t w);

}  // namespace ncdiff
