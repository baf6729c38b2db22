#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncdiff/bitstream.hpp"
#include "ncdiff/entropy_model.hpp"
#include "ncdiff/image.hpp"
#include "ncdiff/nn.hpp"
#include "ncdiff/rng.hpp"

namespace ncdiff {

struct CodecConfig {
  int64_t in_channels = 3;
  int64_t hidden = 128;
  int64_t latent_channels = 192;
  int64_t support = 64;   // entropy support [-L, L]
  double tail = 1e-9;     // minimum symbol probability
  static constexpr int64_t kStride = 16;
};

/// Continuous analysis output plus the pre-padding image geometry needed
/// to crop the reconstruction.
struct Latent {
  Tensor data;  // [C_y, H/s, W/s]
  int64_t orig_h = 0;
  int64_t orig_w = 0;
};

enum class QuantizerMode { kTrainUniform, kTestRound };
QuantizerMode quantizer_mode_from_string(const std::string& s);

/// latent + u, u i.i.d. uniform on [-0.5, 0.5); fresh draws per call.
Tensor quantize_train(const Tensor& latent, Rng& rng);

/// Elementwise round-half-away-from-zero, clamped to [-support, support]
/// with a logged warning when clamping occurs.
Tensor quantize_test(const Tensor& latent, int64_t support);

/// Signed-domain difference rec - orig; both images are converted to the
/// signed range first. This is the constrained noise the diffusion model
/// learns to remove.
Image residual_from_pair(const Image& orig, const Image& rec);

/// Four stride-2 5x5 convolutions (total downsampling 16) with leaky ReLU
/// between stages.
class AnalysisTransform {
 public:
  AnalysisTransform(const std::string& name, int64_t in_ch, int64_t hidden, int64_t latent_ch, Rng& rng);
  Tensor forward(const Tensor& x, bool train = false);
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

 private:
  Conv2d c1_, c2_, c3_, c4_;
  LeakyReLU a1_, a2_, a3_;
};

/// Mirror of AnalysisTransform: four 2x transposed convolutions.
class SynthesisTransform {
 public:
  SynthesisTransform(const std::string& name, int64_t latent_ch, int64_t hidden, int64_t out_ch, Rng& rng);
  Tensor forward(const Tensor& y, bool train = false);
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

 private:
  ConvTranspose2d d1_, d2_, d3_, d4_;
  LeakyReLU a1_, a2_, a3_;
};

/// The transform codec: analysis/synthesis pair plus factorized entropy
/// model. Inference methods are pure given fixed weights.
class CodecModel {
 public:
  CodecModel(const CodecConfig& cfg, uint64_t seed);

  const CodecConfig& config() const { return cfg_; }
  void params(ParamList& out);
  EntropyModel& entropy() { return em_; }

  /// Reflect-pads to a stride multiple and runs the analysis transform.
  Latent encode(const Image& img, bool train = false);

  /// Synthesis + crop to the latent's original dims; clamps to [0,1] when
  /// `clamp` (the output boundary); training leaves values free.
  Image decode(const Latent& latent, bool train = false, bool clamp = true);

  /// encode -> round -> entropy-code.
  Bitstream compress(const Image& img);
  Image decompress(const Bitstream& b);

  /// D{Q[E(I)]} under the chosen quantizer. rng required for train-uniform.
  Image reconstruct(const Image& img, QuantizerMode mode, Rng* rng);

  /// eps_n = reconstruct(I) - I in the signed domain.
  Image residual_noise(const Image& img, QuantizerMode mode, Rng* rng);

  double estimate_bits(const Tensor& quantized) const { return em_.estimate_bits(quantized); }

  /// One rate-distortion training step on a stride-divisible unit crop:
  /// loss = bpp + lambda_rd * MSE. Accumulates gradients; caller steps the
  /// optimizer.
  struct StepStats {
    double loss = 0.0, bpp = 0.0, mse = 0.0;
  };
  StepStats train_step_backward(const Tensor& crop, double lambda_rd, Rng& rng);

  /// Held-out rate-distortion numbers under the rounding quantizer.
  StepStats evaluate_rd(const Tensor& crop, double lambda_rd);

  /// Entropy-code / decode a quantized latent (integers in a double tensor).
  std::vector<uint8_t> entropy_encode(const Tensor& q) const;
  Tensor entropy_decode(const std::vector<uint8_t>& payload, int64_t lh, int64_t lw) const;

 private:
  CodecConfig cfg_;
  AnalysisTransform enc_;
  SynthesisTransform dec_;
  EntropyModel em_;
};

/// Rate-distortion training on unit-range crops (all stride-divisible).
struct CodecTrainOptions {
  double lambda_rd = 500.0;
  int64_t steps = 500;
  double lr = 1e-4;
  int64_t log_every = 0;  // 0: silent
};

struct CodecTrainStats {
  double heldout_mse_init = 0.0, heldout_mse_final = 0.0;
  double heldout_bpp_init = 0.0, heldout_bpp_final = 0.0;
};

CodecTrainStats train_codec(CodecModel& model, const std::vector<Tensor>& train_crops,
                            const std::vector<Tensor>& heldout_crops, const CodecTrainOptions& opts, Rng& rng);

}  // namespace ncdiff
