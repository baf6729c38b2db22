#include "ncdiff/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ncdiff/log.hpp"
#include "ncdiff/range_coder.hpp"

namespace ncdiff {

QuantizerMode quantizer_mode_from_string(const std::string& s) {
  if (s == "train-uniform") return QuantizerMode::kTrainUniform;
  if (s == "test-round") return QuantizerMode::kTestRound;
  throw std::invalid_argument("unknown quantizer '" + s + "' (expected train-uniform or test-round)");
}

Tensor quantize_train(const Tensor& latent, Rng& rng) {
  Tensor out = latent;
  double* p = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) p[i] += rng.uniform() - 0.5;
  return out;
}

Tensor quantize_test(const Tensor& latent, int64_t support) {
  Tensor out(latent.shape());
  const double* src = latent.data();
  double* dst = out.data();
  const double lim = static_cast<double>(support);
  int64_t clamped = 0;
  for (int64_t i = 0; i < latent.numel(); ++i) {
    double q = std::round(src[i]);  // rounds halves away from zero
    if (q > lim) {
      q = lim;
      ++clamped;
    } else if (q < -lim) {
      q = -lim;
      ++clamped;
    }
    dst[i] = q;
  }
  if (clamped > 0)
    log_warn("quantize: " + std::to_string(clamped) + " latent values clamped to [-" + std::to_string(support) + ", " +
             std::to_string(support) + "]");
  return out;
}

Image residual_from_pair(const Image& orig, const Image& rec) {
  const Image o = to_signed(orig);
  const Image r = to_signed(rec);
  require_same_shape(o.data, r.data, "residual_from_pair");
  Image out(sub(r.data, o.data), Range::kSigned);
  return out;
}

namespace {
uint64_t derive_seed(uint64_t seed, uint64_t tag) {
  uint64_t x = seed + tag * 0x9E3779B97F4A7C15ull;
  return splitmix64(x);
}
}  // namespace

CodecModel::CodecModel(const CodecConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      enc_([&] {
        Rng rng(derive_seed(seed, 1));
        return AnalysisTransform("codec.enc", cfg.in_channels, cfg.hidden, cfg.latent_channels, rng);
      }()),
      dec_([&] {
        Rng rng(derive_seed(seed, 2));
        return SynthesisTransform("codec.dec", cfg.latent_channels, cfg.hidden, cfg.in_channels, rng);
      }()),
      em_(cfg.latent_channels, cfg.support, cfg.tail) {}

void CodecModel::params(ParamList& out) {
  enc_.params(out);
  dec_.params(out);
  em_.params(out);
}

Latent CodecModel::encode(const Image& img, bool train) {
  validate_image(img);
  if (img.channels() != cfg_.in_channels)
    throw std::invalid_argument("encode: image has " + std::to_string(img.channels()) + " channels, model expects " +
                                std::to_string(cfg_.in_channels));
  if (img.range != Range::kUnit) throw std::invalid_argument("encode expects a unit-range image");

  const int64_t s = CodecConfig::kStride;
  const int64_t h = img.height(), w = img.width();
  const int64_t ph = (h % s == 0) ? h : (h / s + 1) * s;
  const int64_t pw = (w % s == 0) ? w : (w / s + 1) * s;

  Latent lat;
  lat.orig_h = h;
  lat.orig_w = w;
  if (ph == h && pw == w) {
    lat.data = enc_.forward(img.data, train);
  } else {
    lat.data = enc_.forward(pad_reflect(img.data, ph - h, pw - w), train);
  }
  return lat;
}

Image CodecModel::decode(const Latent& latent, bool train, bool clamp) {
  if (latent.data.ndim() != 3 || latent.data.dim(0) != cfg_.latent_channels)
    throw std::invalid_argument("decode: latent shape " + latent.data.shape_str() + " does not match model");
  Tensor out = dec_.forward(latent.data, train);
  if (out.dim(1) < latent.orig_h || out.dim(2) < latent.orig_w)
    throw std::invalid_argument("decode: latent too small for recorded image size");
  Tensor cropped = (out.dim(1) == latent.orig_h && out.dim(2) == latent.orig_w)
                       ? std::move(out)
                       : crop(out, latent.orig_h, latent.orig_w);
  Image img(std::move(cropped), Range::kUnit);
  if (clamp) img.data.clamp_(0.0, 1.0);
  return img;
}

std::vector<uint8_t> CodecModel::entropy_encode(const Tensor& q) const {
  if (q.ndim() != 3 || q.dim(0) != cfg_.latent_channels)
    throw std::invalid_argument("entropy_encode: latent shape mismatch");
  const int64_t L = cfg_.support, n = q.dim(1) * q.dim(2);
  RangeEncoder rc;
  for (int64_t c = 0; c < cfg_.latent_channels; ++c) {
    const std::vector<uint32_t> cum = em_.cdf(c);
    const double* p = q.data() + c * n;
    for (int64_t i = 0; i < n; ++i) {
      const int64_t k = static_cast<int64_t>(p[i]);
      if (k < -L || k > L) throw std::invalid_argument("entropy_encode: symbol outside support");
      const int64_t idx = k + L;
      rc.encode(cum[idx], cum[idx + 1], EntropyModel::kCdfTotal);
    }
  }
  return rc.finish();
}

Tensor CodecModel::entropy_decode(const std::vector<uint8_t>& payload, int64_t lh, int64_t lw) const {
  const int64_t L = cfg_.support, n = lh * lw;
  Tensor q({cfg_.latent_channels, lh, lw});
  RangeDecoder rc(payload.data(), payload.size());
  for (int64_t c = 0; c < cfg_.latent_channels; ++c) {
    const std::vector<uint32_t> cum = em_.cdf(c);
    double* p = q.data() + c * n;
    for (int64_t i = 0; i < n; ++i) {
      const uint32_t f = rc.decode_freq(EntropyModel::kCdfTotal);
      // last cum entry with cum[idx] <= f
      const auto it = std::upper_bound(cum.begin(), cum.end(), f);
      const int64_t idx = static_cast<int64_t>(it - cum.begin()) - 1;
      rc.decode(cum[idx], cum[idx + 1]);
      p[i] = static_cast<double>(idx - L);
    }
  }
  return q;
}

Bitstream CodecModel::compress(const Image& img) {
  Latent lat = encode(img);
  Tensor q = quantize_test(lat.data, cfg_.support);
  Bitstream b;
  b.orig_h = static_cast<uint32_t>(lat.orig_h);
  b.orig_w = static_cast<uint32_t>(lat.orig_w);
  b.latent_c = static_cast<uint16_t>(lat.data.dim(0));
  b.latent_h = static_cast<uint16_t>(lat.data.dim(1));
  b.latent_w = static_cast<uint16_t>(lat.data.dim(2));
  b.payload = entropy_encode(q);
  return b;
}

Image CodecModel::decompress(const Bitstream& b) {
  if (b.latent_c != cfg_.latent_channels)
    throw std::invalid_argument("decompress: bitstream latent channels " + std::to_string(b.latent_c) +
                                " do not match model");
  Latent lat;
  lat.data = entropy_decode(b.payload, b.latent_h, b.latent_w);
  lat.orig_h = b.orig_h;
  lat.orig_w = b.orig_w;
  return decode(lat);
}

Image CodecModel::reconstruct(const Image& img, QuantizerMode mode, Rng* rng) {
  Latent lat = encode(img);
  if (mode == QuantizerMode::kTrainUniform) {
    if (rng == nullptr) throw std::invalid_argument("reconstruct: train-uniform quantizer needs an rng");
    lat.data = quantize_train(lat.data, *rng);
  } else {
    lat.data = quantize_test(lat.data, cfg_.support);
  }
  return decode(lat);
}

Image CodecModel::residual_noise(const Image& img, QuantizerMode mode, Rng* rng) {
  return residual_from_pair(img, reconstruct(img, mode, rng));
}

CodecModel::StepStats CodecModel::train_step_backward(const Tensor& crop, double lambda_rd, Rng& rng) {
  if (crop.ndim() != 3 || crop.dim(1) % CodecConfig::kStride != 0 || crop.dim(2) % CodecConfig::kStride != 0)
    throw std::invalid_argument("train_step: crop dims must be stride multiples, got " + crop.shape_str());
  const int64_t px = crop.dim(1) * crop.dim(2);

  Tensor y = enc_.forward(crop, true);
  Tensor v = quantize_train(y, rng);
  Tensor xhat = dec_.forward(v, true);

  StepStats st;
  st.mse = mse(xhat, crop);
  Tensor gv(v.shape());
  const double rate_bits = em_.rate_bits_backward(v, gv);
  st.bpp = rate_bits / static_cast<double>(px);
  st.loss = st.bpp + lambda_rd * st.mse;
  if (!std::isfinite(st.loss))
    throw std::runtime_error("codec training diverged: non-finite loss (bpp=" + std::to_string(st.bpp) +
                             ", mse=" + std::to_string(st.mse) + ")");

  // d loss / d xhat = lambda_rd * 2 (xhat - x) / numel
  Tensor gxhat = sub(xhat, crop);
  gxhat.scale_(2.0 * lambda_rd / static_cast<double>(crop.numel()));
  Tensor gy = dec_.backward(gxhat);
  gy.add_scaled_(gv, 1.0 / static_cast<double>(px));  // rate reaches y through the additive-noise identity
  enc_.backward(gy);
  return st;
}

CodecModel::StepStats CodecModel::evaluate_rd(const Tensor& crop, double lambda_rd) {
  Image img(crop, Range::kUnit);
  Latent lat = encode(img);
  Tensor q = quantize_test(lat.data, cfg_.support);
  lat.data = q;
  Image rec = decode(lat);
  StepStats st;
  st.mse = mse(rec.data, crop);
  st.bpp = em_.estimate_bits(q) / static_cast<double>(crop.dim(1) * crop.dim(2));
  st.loss = st.bpp + lambda_rd * st.mse;
  return st;
}

CodecTrainStats train_codec(CodecModel& model, const std::vector<Tensor>& train_crops,
                            const std::vector<Tensor>& heldout_crops, const CodecTrainOptions& opts, Rng& rng) {
  if (train_crops.empty()) throw std::invalid_argument("train_codec: empty training set");
  ParamList ps;
  model.params(ps);
  Adam opt(ps, opts.lr);

  auto heldout_stats = [&](double* mse_out, double* bpp_out) {
    double m = 0.0, b = 0.0;
    for (const Tensor& c : heldout_crops) {
      const auto st = model.evaluate_rd(c, opts.lambda_rd);
      m += st.mse;
      b += st.bpp;
    }
    const double n = std::max<double>(1.0, static_cast<double>(heldout_crops.size()));
    *mse_out = m / n;
    *bpp_out = b / n;
  };

  CodecTrainStats stats;
  heldout_stats(&stats.heldout_mse_init, &stats.heldout_bpp_init);

  for (int64_t step = 0; step < opts.steps; ++step) {
    const Tensor& crop = train_crops[rng.uniform_int(0, static_cast<int64_t>(train_crops.size()) - 1)];
    zero_grads(ps);
    const auto st = model.train_step_backward(crop, opts.lambda_rd, rng);
    opt.step();
    if (opts.log_every > 0 && (step + 1) % opts.log_every == 0)
      log_info("codec step " + std::to_string(step + 1) + "/" + std::to_string(opts.steps) + " loss " +
               std::to_string(st.loss) + " bpp " + std::to_string(st.bpp) + " mse " + std::to_string(st.mse));
  }

  heldout_stats(&stats.heldout_mse_final, &stats.heldout_bpp_final);
  return stats;
}

}  // namespace ncdiff
