#include "ncdiff/codec.hpp"

namespace ncdiff {

AnalysisTransform::AnalysisTransform(const std::string& name, int64_t in_ch, int64_t hidden, int64_t latent_ch,
                                     Rng& rng)
    : c1_(name + ".c1", in_ch, hidden, 5, 2, 2, rng),
      c2_(name + ".c2", hidden, hidden, 5, 2, 2, rng),
      c3_(name + ".c3", hidden, hidden, 5, 2, 2, rng),
      c4_(name + ".c4", hidden, latent_ch, 5, 2, 2, rng) {}

Tensor AnalysisTransform::forward(const Tensor& x, bool train) {
  Tensor h = a1_.forward(c1_.forward(x, train), train);
  h = a2_.forward(c2_.forward(h, train), train);
  h = a3_.forward(c3_.forward(h, train), train);
  return c4_.forward(h, train);
}

Tensor AnalysisTransform::backward(const Tensor& gy) {
  Tensor g = c4_.backward(gy);
  g = c3_.backward(a3_.backward(g));
  g = c2_.backward(a2_.backward(g));
  return c1_.backward(a1_.backward(g));
}

void AnalysisTransform::params(ParamList& out) {
  c1_.params(out);
  c2_.params(out);
  c3_.params(out);
  c4_.params(out);
}

SynthesisTransform::SynthesisTransform(const std::string& name, int64_t latent_ch, int64_t hidden, int64_t out_ch,
                                       Rng& rng)
    : d1_(name + ".d1", latent_ch, hidden, rng),
      d2_(name + ".d2", hidden, hidden, rng),
      d3_(name + ".d3", hidden, hidden, rng),
      d4_(name + ".d4", hidden, out_ch, rng) {}

Tensor SynthesisTransform::forward(const Tensor& y, bool train) {
  Tensor h = a1_.forward(d1_.forward(y, train), train);
  h = a2_.forward(d2_.forward(h, train), train);
  h = a3_.forward(d3_.forward(h, train), train);
  return d4_.forward(h, train);
}

Tensor SynthesisTransform::backward(const Tensor& gy) {
  Tensor g = d4_.backward(gy);
  g = d3_.backward(a3_.backward(g));
  g = d2_.backward(a2_.backward(g));
  return d1_.backward(a1_.backward(g));
}

void SynthesisTransform::params(ParamList& out) {
  d1_.params(out);
  d2_.params(out);
  d3_.params(out);
  d4_.params(out);
}

}  // namespace ncdiff
