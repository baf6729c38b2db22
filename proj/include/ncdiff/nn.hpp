#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ncdiff/rng.hpp"
#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Learnable tensor with its gradient accumulator. Names are hierarchical
/// ("unet.down0.block1.conv2.weight") and double as checkpoint keys.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<int64_t> shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// Flat view over a module tree's parameters; order is construction order
/// and is part of the checkpoint contract.
using ParamList = std::vector<Param*>;

void zero_grads(const ParamList& params);

/// All layers follow the same shape: forward caches what backward needs,
/// backward returns d(loss)/d(input) and accumulates into Param::grad.
/// Layers are stateful single-slot pipelines: one forward, then at most one
/// backward before the next forward. Inference passes train=false to skip
/// the caches (tiled inference would otherwise hold hundreds of MB).

class Conv2d {
 public:
  Conv2d(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, Rng& rng,
         bool zero_init = false);
  Tensor forward(const Tensor& x, bool train = true);
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

  static int64_t out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
  }

  Param w;  // [cout, cin*k*k]
  Param b;  // [cout]

 private:
  int64_t cin_, cout_, k_, stride_, pad_;
  Tensor cols_;  // im2col of the last training forward
  int64_t in_h_ = 0, in_w_ = 0;
};

/// Exact 2x upsampler: k=5, stride=2, pad=2, output_padding=1, so the output
/// is precisely twice the input size. Weight layout matches the mirror
/// convolution ([cin, cout*k*k]); forward is that convolution's adjoint.
class ConvTranspose2d {
 public:
  ConvTranspose2d(std::string name, int64_t cin, int64_t cout, Rng& rng);
  Tensor forward(const Tensor& x, bool train = true);
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

  Param w;  // [cin, cout*k*k]
  Param b;  // [cout]

 private:
  static constexpr int64_t kK = 5, kStride = 2, kPad = 2;
  int64_t cin_, cout_;
  Tensor x_;  // input of the last training forward, flattened [cin, h*w]
  int64_t in_h_ = 0, in_w_ = 0;
};

class Dense {
 public:
  Dense(std::string name, int64_t in, int64_t out, Rng& rng, bool zero_init = false);
  Tensor forward(const Tensor& x, bool train = true);  // x: [in] -> [out]
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

  Param w;  // [out, in]
  Param b;  // [out]

 private:
  int64_t in_, out_;
  Tensor x_;
};

class GroupNorm {
 public:
  GroupNorm(std::string name, int64_t channels, int64_t groups = 8, double eps = 1e-5);
  Tensor forward(const Tensor& x, bool train = true);  // [C,H,W]
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

  Param gamma;  // [C], ones
  Param beta;   // [C], zeros

 private:
  int64_t channels_, groups_;
  double eps_;
  Tensor xhat_;
  std::vector<double> invstd_;
};

/// Stateless activations still cache their input for backward.
class SiLU {
 public:
  Tensor forward(const Tensor& x, bool train = true);
  Tensor backward(const Tensor& gy);

 private:
  Tensor x_;
};

class LeakyReLU {
 public:
  explicit LeakyReLU(double alpha = 0.2) : alpha_(alpha) {}
  Tensor forward(const Tensor& x, bool train = true);
  Tensor backward(const Tensor& gy);

 private:
  double alpha_;
  Tensor x_;
};

/// Nearest-neighbor 2x upsample; backward is 2x2 sum pooling.
Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& gy);

/// 2x2 average pooling (used by the stub perceptual embedder).
Tensor avg_pool2x(const Tensor& x);
Tensor avg_pool2x_backward(const Tensor& gy, int64_t in_h, int64_t in_w);

/// Single-head self-attention over spatial positions with pre-norm and a
/// zero-initialized output projection (identity at init).
class SelfAttention2d {
 public:
  SelfAttention2d(std::string name, int64_t channels, Rng& rng);
  Tensor forward(const Tensor& x, bool train = true);
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

 private:
  int64_t channels_;
  GroupNorm norm_;
  Conv2d q_, k_, v_, proj_;
  Tensor qv_, kv_, vv_, attn_;  // caches: projected tokens + row-softmax matrix
  int64_t h_ = 0, w_ = 0;
};

/// Sinusoidal timestep embedding, dimension must be even. Frequencies span
/// 1 .. 1/10000 geometrically; layout is [sin..., cos...].
Tensor time_embedding(double t, int64_t dim);

/// [Ca,H,W] + [Cb,H,W] -> [Ca+Cb,H,W]; split is its exact inverse and the
/// adjoint used for concat's backward.
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& x, int64_t ca);

/// Adam with bias correction; state (m, v, step) serializes for resume.
class Adam {
 public:
  Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  void set_lr(double lr) { lr_ = lr; }
  int64_t steps_done() const { return t_; }

  /// Raw state as named tensors for checkpointing: m.<param>, v.<param>.
  std::vector<std::pair<std::string, const Tensor*>> state_tensors() const;
  void load_state(const std::string& name, const Tensor& t);
  void set_steps_done(int64_t t) { t_ = t; }

 private:
  ParamList params_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace ncdiff
