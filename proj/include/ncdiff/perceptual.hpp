#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ncdiff/image.hpp"
#include "ncdiff/nn.hpp"

namespace ncdiff {

/// Differentiable image-quality term used inside the training loss.
/// Implementations must be deterministic for a given input pair.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string descriptor() const = 0;
  /// Mean-reduced distance, >= 0, and 0 when the images are identical.
  virtual double distance(const Image& target, const Image& pred) = 0;
  /// Same value; also accumulates scale * d(distance)/d(pred.data) into
  /// gpred. The target side is treated as a constant.
  virtual double distance_backward(const Image& target, const Image& pred, Tensor& gpred, double scale) = 0;
};

/// Maps an image to a fixed-length embedding vector. Deterministic and
/// differentiable with respect to the input pixels.
class PerceptualEmbedder {
 public:
  virtual ~PerceptualEmbedder() = default;
  virtual std::string descriptor() const = 0;
  virtual int64_t dim() const = 0;
  /// Caches activations for a following embed_backward call.
  virtual Tensor embed(const Image& img) = 0;
  /// Vector-Jacobian product through the most recent embed call: returns
  /// d(g . embed)/d(pixels), shaped like that image's data.
  virtual Tensor embed_backward(const Tensor& gembed) = 0;
};

/// Weights of the small fixed convolutional stack behind the default metric
/// and embedder: per stage one 3x3 stride-1 conv (tanh activation), stages
/// separated by 2x2 average pooling. Also the payload of the external
/// adapter's weight files.
struct FeatureNetWeights {
  int64_t in_channels = 3;
  std::vector<int64_t> stage_channels;
  std::vector<Tensor> w;  // per stage [cout, cin*3*3]
  std::vector<Tensor> b;  // per stage [cout]
};

/// The default desk-scale weights: fixed seed, never trained, stages of
/// 8/16/32 channels over RGB input.
FeatureNetWeights stub_feature_weights();

/// Binary weight-file round trip for the external adapter ("NCFE" format).
void save_feature_weights(const std::string& path, const FeatureNetWeights& weights);
FeatureNetWeights load_feature_weights(const std::string& path);

std::unique_ptr<PerceptualMetric> make_stub_metric();
std::unique_ptr<PerceptualMetric> make_external_metric(const std::string& path);
std::unique_ptr<PerceptualEmbedder> make_stub_embedder();
std::unique_ptr<PerceptualEmbedder> make_external_embedder(const std::string& path);

}  // namespace ncdiff
