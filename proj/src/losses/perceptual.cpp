#include "ncdiff/perceptual.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ncdiff {
namespace {

constexpr uint64_t kStubSeed = 0x5EED;
constexpr char kMagic[4] = {'N', 'C', 'F', 'E'};
constexpr uint8_t kVersion = 1;

// ------------------------------------------------------------- weight file

void put_u16(std::ostream& os, uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  os.write(bytes, 2);
}

uint16_t get_u16(std::istream& is) {
  unsigned char bytes[2];
  is.read(reinterpret_cast<char*>(bytes), 2);
  return static_cast<uint16_t>(bytes[0] | (bytes[1] << 8));
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(bytes, 8);
}

double get_f64(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

// ------------------------------------------------------------ feature net

int64_t round_up4(int64_t n) { return (n + 3) / 4 * 4; }

// Shared fixed conv stack. Stage s: 3x3 stride-1 pad-1 conv then tanh;
// stages after the first read a 2x2 average-pooled copy of the previous
// stage's activation. Weights are fixed at construction and never trained.
class FeatureNet {
 public:
  explicit FeatureNet(const FeatureNetWeights& weights) : in_channels_(weights.in_channels) {
    if (weights.stage_channels.empty()) throw std::invalid_argument("feature net needs at least one stage");
    Rng rng(kStubSeed);  // layer init is overwritten below; any seed works
    int64_t cin = in_channels_;
    for (size_t s = 0; s < weights.stage_channels.size(); ++s) {
      const int64_t cout = weights.stage_channels[s];
      convs_.emplace_back("feat.conv" + std::to_string(s), cin, cout, 3, 1, 1, rng);
      if (!weights.w[s].same_shape(convs_.back().w.value) || weights.b[s].numel() != cout) {
        throw std::invalid_argument("feature weights do not match declared stage shapes");
      }
      convs_.back().w.value = weights.w[s];
      convs_.back().b.value = weights.b[s];
      cin = cout;
    }
  }

  int64_t embed_dim() const {
    int64_t d = 0;
    for (const auto& c : convs_) d += c.w.value.dim(0);
    return d;
  }

  int64_t stages() const { return static_cast<int64_t>(convs_.size()); }

  // Unit-range [3,H,W] input padded to even pool sizes; caches activations
  // when train is set so backward() can run.
  std::vector<Tensor> forward(const Tensor& x, bool train) {
    tanh_y_.clear();
    std::vector<Tensor> feats;
    Tensor cur = x;
    for (size_t s = 0; s < convs_.size(); ++s) {
      if (s > 0) cur = avg_pool2x(cur);
      Tensor a = convs_[s].forward(cur, train);
      for (int64_t k = 0; k < a.numel(); ++k) a.data()[k] = std::tanh(a.data()[k]);
      if (train) tanh_y_.push_back(a);
      feats.push_back(std::move(a));
      cur = feats.back();
    }
    return feats;
  }

  // Pulls per-stage feature gradients back to the prepped input. Parameter
  // gradients are discarded afterwards: the stack is frozen by contract.
  Tensor backward(const std::vector<Tensor>& gfeats) {
    Tensor carried;
    for (int64_t s = stages() - 1; s >= 0; --s) {
      Tensor gf = gfeats[static_cast<size_t>(s)];
      if (carried.numel() > 0) {
        for (int64_t k = 0; k < gf.numel(); ++k) gf.data()[k] += carried.data()[k];
      }
      const Tensor& y = tanh_y_[static_cast<size_t>(s)];
      for (int64_t k = 0; k < gf.numel(); ++k) gf.data()[k] *= 1.0 - y.data()[k] * y.data()[k];
      Tensor gin = convs_[static_cast<size_t>(s)].backward(gf);
      if (s == 0) {
        ParamList params;
        for (auto& c : convs_) c.params(params);
        zero_grads(params);
        return gin;
      }
      const Tensor& prev = tanh_y_[static_cast<size_t>(s - 1)];
      carried = avg_pool2x_backward(gin, prev.dim(1), prev.dim(2));
    }
    throw std::logic_error("feature net has no stages");
  }

 private:
  int64_t in_channels_;
  std::vector<Conv2d> convs_;
  std::vector<Tensor> tanh_y_;
};

// Converts any Image to the net's unit-range RGB input: signed ranges are
// mapped affinely without clamping (the map must stay differentiable), gray
// is replicated to three channels, and dims are reflect-padded so both pool
// stages see even sizes.
struct PreppedInput {
  Tensor data;
  bool was_signed = false;
  bool was_gray = false;
  int64_t orig_h = 0, orig_w = 0;
};

PreppedInput prep_input(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) throw std::invalid_argument("perceptual input must have 1 or 3 channels");
  if (img.height() < 4 || img.width() < 4) throw std::invalid_argument("perceptual input must be at least 4x4");
  PreppedInput p;
  p.was_signed = img.range == Range::kSigned;
  p.was_gray = img.channels() == 1;
  p.orig_h = img.height();
  p.orig_w = img.width();
  Tensor unit({3, p.orig_h, p.orig_w});
  const int64_t plane = p.orig_h * p.orig_w;
  for (int64_t c = 0; c < 3; ++c) {
    const double* src = img.data.data() + (p.was_gray ? 0 : c * plane);
    double* dst = unit.data() + c * plane;
    if (p.was_signed) {
      for (int64_t k = 0; k < plane; ++k) dst[k] = 0.5 * (src[k] + 1.0);
    } else {
      for (int64_t k = 0; k < plane; ++k) dst[k] = src[k];
    }
  }
  const int64_t ph = round_up4(p.orig_h), pw = round_up4(p.orig_w);
  p.data = (ph == p.orig_h && pw == p.orig_w) ? std::move(unit) : pad_reflect(unit, ph - p.orig_h, pw - p.orig_w);
  return p;
}

Tensor prep_backward(const Tensor& gprep, const PreppedInput& p) {
  Tensor g3 = (gprep.dim(1) == p.orig_h && gprep.dim(2) == p.orig_w) ? gprep : pad_reflect_adjoint(gprep, p.orig_h, p.orig_w);
  const double factor = p.was_signed ? 0.5 : 1.0;
  const int64_t plane = p.orig_h * p.orig_w;
  Tensor g({p.was_gray ? 1 : 3, p.orig_h, p.orig_w});
  for (int64_t c = 0; c < 3; ++c) {
    const double* src = g3.data() + c * plane;
    double* dst = g.data() + (p.was_gray ? 0 : c * plane);
    for (int64_t k = 0; k < plane; ++k) dst[k] += factor * src[k];
  }
  return g;
}

std::string stage_string(const FeatureNetWeights& w) {
  std::string s = "conv3x";
  for (size_t i = 0; i < w.stage_channels.size(); ++i) {
    if (i > 0) s += "-";
    s += std::to_string(w.stage_channels[i]);
  }
  return s;
}

// --------------------------------------------------------------- metric

class FeatureMetric : public PerceptualMetric {
 public:
  FeatureMetric(const FeatureNetWeights& weights, std::string descriptor)
      : net_(weights), descriptor_(std::move(descriptor)) {}

  std::string descriptor() const override { return descriptor_; }

  double distance(const Image& target, const Image& pred) override {
    return run(target, pred, nullptr, 0.0);
  }

  double distance_backward(const Image& target, const Image& pred, Tensor& gpred, double scale) override {
    return run(target, pred, &gpred, scale);
  }

 private:
  // Mean over stages of the per-stage mean squared feature difference.
  double run(const Image& target, const Image& pred, Tensor* gpred, double scale) {
    require_same_shape(target.data, pred.data, "perceptual distance");
    PreppedInput pt = prep_input(target);
    std::vector<Tensor> ft = net_.forward(pt.data, false);
    PreppedInput pp = prep_input(pred);
    std::vector<Tensor> fp = net_.forward(pp.data, gpred != nullptr);

    const double stage_w = 1.0 / static_cast<double>(net_.stages());
    double dist = 0.0;
    std::vector<Tensor> gfeats;
    for (size_t s = 0; s < fp.size(); ++s) {
      const double inv_n = 1.0 / static_cast<double>(fp[s].numel());
      double acc = 0.0;
      Tensor gf(fp[s].shape());
      for (int64_t k = 0; k < fp[s].numel(); ++k) {
        const double diff = fp[s].data()[k] - ft[s].data()[k];
        acc += diff * diff;
        if (gpred != nullptr) gf.data()[k] = scale * stage_w * 2.0 * diff * inv_n;
      }
      dist += stage_w * acc * inv_n;
      if (gpred != nullptr) gfeats.push_back(std::move(gf));
    }
    if (gpred != nullptr) {
      Tensor g = prep_backward(net_.backward(gfeats), pp);
      for (int64_t k = 0; k < g.numel(); ++k) gpred->data()[k] += g.data()[k];
    }
    return dist;
  }

  FeatureNet net_;
  std::string descriptor_;
};

// -------------------------------------------------------------- embedder

class FeatureEmbedder : public PerceptualEmbedder {
 public:
  FeatureEmbedder(const FeatureNetWeights& weights, std::string descriptor)
      : net_(weights), descriptor_(std::move(descriptor)) {}

  std::string descriptor() const override { return descriptor_; }
  int64_t dim() const override { return net_.embed_dim(); }

  // Embedding: concatenated per-channel spatial means of every stage's
  // activation, so the dimension is independent of the input size.
  Tensor embed(const Image& img) override {
    prep_ = prep_input(img);
    feats_ = net_.forward(prep_.data, true);
    Tensor e({dim()});
    int64_t off = 0;
    for (const Tensor& f : feats_) {
      const int64_t c = f.dim(0), plane = f.dim(1) * f.dim(2);
      for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const double* src = f.data() + ch * plane;
        for (int64_t k = 0; k < plane; ++k) acc += src[k];
        e[off++] = acc / static_cast<double>(plane);
      }
    }
    return e;
  }

  Tensor embed_backward(const Tensor& gembed) override {
    if (feats_.empty()) throw std::logic_error("embed_backward without a preceding embed");
    if (gembed.numel() != dim()) throw std::invalid_argument("embedding gradient has wrong dimension");
    std::vector<Tensor> gfeats;
    int64_t off = 0;
    for (const Tensor& f : feats_) {
      const int64_t c = f.dim(0), plane = f.dim(1) * f.dim(2);
      Tensor gf(f.shape());
      for (int64_t ch = 0; ch < c; ++ch) {
        const double g = gembed[off++] / static_cast<double>(plane);
        double* dst = gf.data() + ch * plane;
        for (int64_t k = 0; k < plane; ++k) dst[k] = g;
      }
      gfeats.push_back(std::move(gf));
    }
    return prep_backward(net_.backward(gfeats), prep_);
  }

 private:
  FeatureNet net_;
  std::string descriptor_;
  PreppedInput prep_;
  std::vector<Tensor> feats_;
};

}  // namespace

FeatureNetWeights stub_feature_weights() {
  FeatureNetWeights weights;
  weights.in_channels = 3;
  weights.stage_channels = {8, 16, 32};
  Rng rng(kStubSeed);
  int64_t cin = weights.in_channels;
  for (int64_t cout : weights.stage_channels) {
    const int64_t fan_in = cin * 9;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w({cout, fan_in});
    rng.fill_uniform(w, -bound, bound);
    Tensor b({cout});
    rng.fill_uniform(b, -0.5 * bound, 0.5 * bound);
    weights.w.push_back(std::move(w));
    weights.b.push_back(std::move(b));
    cin = cout;
  }
  return weights;
}

void save_feature_weights(const std::string& path, const FeatureNetWeights& weights) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open feature weight file for writing: " + path);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  os.put(static_cast<char>(weights.stage_channels.size()));
  put_u16(os, static_cast<uint16_t>(weights.in_channels));
  for (int64_t c : weights.stage_channels) put_u16(os, static_cast<uint16_t>(c));
  for (size_t s = 0; s < weights.stage_channels.size(); ++s) {
    for (int64_t k = 0; k < weights.w[s].numel(); ++k) put_f64(os, weights.w[s].data()[k]);
    for (int64_t k = 0; k < weights.b[s].numel(); ++k) put_f64(os, weights.b[s].data()[k]);
  }
  if (!os) throw std::runtime_error("failed writing feature weight file: " + path);
}

FeatureNetWeights load_feature_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open feature weight file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a feature weight file: " + path);
  const int version = is.get();
  if (version != kVersion) throw std::runtime_error("unsupported feature weight file version");
  const int n_stages = is.get();
  if (n_stages < 1 || n_stages > 16) throw std::runtime_error("feature weight file has invalid stage count");
  FeatureNetWeights weights;
  weights.in_channels = get_u16(is);
  for (int s = 0; s < n_stages; ++s) weights.stage_channels.push_back(get_u16(is));
  int64_t cin = weights.in_channels;
  for (int s = 0; s < n_stages; ++s) {
    const int64_t cout = weights.stage_channels[static_cast<size_t>(s)];
    Tensor w({cout, cin * 9});
    for (int64_t k = 0; k < w.numel(); ++k) w.data()[k] = get_f64(is);
    Tensor b({cout});
    for (int64_t k = 0; k < b.numel(); ++k) b.data()[k] = get_f64(is);
    if (!is) throw std::runtime_error("truncated feature weight file: " + path);
    weights.w.push_back(std::move(w));
    weights.b.push_back(std::move(b));
    cin = cout;
  }
  return weights;
}

std::unique_ptr<PerceptualMetric> make_stub_metric() {
  FeatureNetWeights w = stub_feature_weights();
  return std::make_unique<FeatureMetric>(w, "stub:" + stage_string(w));
}

std::unique_ptr<PerceptualMetric> make_external_metric(const std::string& path) {
  FeatureNetWeights w = load_feature_weights(path);
  return std::make_unique<FeatureMetric>(w, "external:" + path + ":" + stage_string(w));
}

std::unique_ptr<PerceptualEmbedder> make_stub_embedder() {
  FeatureNetWeights w = stub_feature_weights();
  return std::make_unique<FeatureEmbedder>(w, "stub:" + stage_string(w));
}

std::unique_ptr<PerceptualEmbedder> make_external_embedder(const std::string& path) {
  FeatureNetWeights w = load_feature_weights(path);
  return std::make_unique<FeatureEmbedder>(w, "external:" + path + ":" + stage_string(w));
}

}  // namespace ncdiff
