#include "ncdiff/predictor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncdiff {
namespace {

void validate_config(const PredictorConfig& cfg) {
  if (cfg.in_channels != 1 && cfg.in_channels != 3) throw std::invalid_argument("predictor needs 1 or 3 channels");
  if (cfg.base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  for (int64_t m : cfg.stage_multipliers) {
    if (m < 1) throw std::invalid_argument("stage multipliers must be >= 1");
  }
  if (cfg.attention_stage < -1 || cfg.attention_stage > 3) throw std::invalid_argument("attention_stage must be -1..3");
  if (cfg.time_embed_dim < 2 || cfg.time_embed_dim % 2 != 0) throw std::invalid_argument("time_embed_dim must be even");
  if (cfg.aff.r_th.size() != 4) throw std::invalid_argument("aff.r_th must list 4 levels");
  for (size_t i = 0; i + 1 < cfg.aff.r_th.size(); ++i) {
    if (cfg.aff.r_th[i] < cfg.aff.r_th[i + 1]) {
      throw std::invalid_argument("aff.r_th must be non-increasing from shallow to deep");
    }
  }
}

// Residual block with timestep modulation: the normalized hidden state is
// scaled and shifted per channel by a projection of the time embedding.
struct ResBlock {
  ResBlock(const std::string& name, int64_t cin, int64_t cout, int64_t emb_dim, Rng& rng)
      : gn1(name + ".gn1", cin),
        conv1(name + ".conv1", cin, cout, 3, 1, 1, rng),
        emb(name + ".emb", emb_dim, 2 * cout, rng),
        gn2(name + ".gn2", cout),
        conv2(name + ".conv2", cout, cout, 3, 1, 1, rng, /*zero_init=*/true),
        cout_(cout) {
    if (cin != cout) shortcut = std::make_unique<Conv2d>(name + ".shortcut", cin, cout, 1, 1, 0, rng);
  }

  Tensor forward(const Tensor& x, const Tensor& temb, bool train) {
    Tensor h = conv1.forward(act1.forward(gn1.forward(x, train), train), train);
    Tensor mod = emb.forward(emb_act.forward(temb, train), train);  // [scale..., shift...]
    Tensor hn = gn2.forward(h, train);
    const int64_t plane = hn.dim(1) * hn.dim(2);
    Tensor hm(hn.shape());
    for (int64_t c = 0; c < cout_; ++c) {
      const double s = 1.0 + mod[c];
      const double sh = mod[cout_ + c];
      const double* src = hn.data() + c * plane;
      double* dst = hm.data() + c * plane;
      for (int64_t k = 0; k < plane; ++k) dst[k] = src[k] * s + sh;
    }
    if (train) {
      hn_ = hn;
      mod_ = mod;
    }
    Tensor out = conv2.forward(act2.forward(hm, train), train);
    out.add_(shortcut ? shortcut->forward(x, train) : x);
    return out;
  }

  Tensor backward(const Tensor& gy, Tensor& gtemb) {
    Tensor gh = act2.backward(conv2.backward(gy));  // d/d hm
    const int64_t plane = hn_.dim(1) * hn_.dim(2);
    Tensor ghn(hn_.shape());
    Tensor gmod({2 * cout_});
    for (int64_t c = 0; c < cout_; ++c) {
      const double s = 1.0 + mod_[c];
      const double* g = gh.data() + c * plane;
      const double* h = hn_.data() + c * plane;
      double* out = ghn.data() + c * plane;
      double gs = 0.0, gb = 0.0;
      for (int64_t k = 0; k < plane; ++k) {
        out[k] = g[k] * s;
        gs += g[k] * h[k];
        gb += g[k];
      }
      gmod[c] = gs;
      gmod[cout_ + c] = gb;
    }
    gtemb.add_(emb_act.backward(emb.backward(gmod)));
    Tensor gx = gn1.backward(act1.backward(conv1.backward(gn2.backward(ghn))));
    gx.add_(shortcut ? shortcut->backward(gy) : gy);
    return gx;
  }

  void params(ParamList& out) {
    gn1.params(out);
    conv1.params(out);
    emb.params(out);
    gn2.params(out);
    conv2.params(out);
    if (shortcut) shortcut->params(out);
  }

  GroupNorm gn1;
  SiLU act1;
  Conv2d conv1;
  SiLU emb_act;
  Dense emb;
  GroupNorm gn2;
  SiLU act2;
  Conv2d conv2;
  std::unique_ptr<Conv2d> shortcut;
  int64_t cout_;
  Tensor hn_, mod_;
};

struct DownStage {
  std::unique_ptr<ResBlock> r1, r2;
  std::unique_ptr<SelfAttention2d> a1, a2;
  std::unique_ptr<Conv2d> down;  // absent on the deepest stage
};

struct UpStage {
  std::unique_ptr<ResBlock> r1, r2, r3;
  std::unique_ptr<SelfAttention2d> a1, a2, a3;
  std::unique_ptr<Conv2d> up_conv;  // follows nearest-2x; absent on stage 0
};

}  // namespace

struct UNetPredictor::Impl {
  PredictorConfig cfg;
  std::unique_ptr<Conv2d> stem;
  std::unique_ptr<Dense> temb1, temb2;
  SiLU temb_act;
  std::array<DownStage, 4> downs;
  std::array<UpStage, 4> ups;
  std::vector<AFFLayer> affs;
  std::unique_ptr<GroupNorm> head_gn;
  SiLU head_act;
  std::unique_ptr<Conv2d> head_conv;

  Tensor temb_;                  // cached active embedding of the last forward
  std::array<int64_t, 4> up_in_ch_{};  // pre-concat channel counts, for split

  explicit Impl(const PredictorConfig& c, uint64_t seed) : cfg(c) {
    validate_config(cfg);
    Rng rng(seed);
    const int64_t d = cfg.time_embed_dim;
    std::array<int64_t, 4> ch{};
    for (int s = 0; s < 4; ++s) ch[static_cast<size_t>(s)] = cfg.base_channels * cfg.stage_multipliers[static_cast<size_t>(s)];

    stem = std::make_unique<Conv2d>("unet.stem", 2 * cfg.in_channels, cfg.base_channels, 3, 1, 1, rng);
    temb1 = std::make_unique<Dense>("unet.temb1", d, d, rng);
    temb2 = std::make_unique<Dense>("unet.temb2", d, d, rng);

    int64_t cin = cfg.base_channels;
    for (int s = 0; s < 4; ++s) {
      auto& st = downs[static_cast<size_t>(s)];
      const std::string base = "unet.down" + std::to_string(s);
      const int64_t cs = ch[static_cast<size_t>(s)];
      st.r1 = std::make_unique<ResBlock>(base + ".res0", cin, cs, d, rng);
      st.r2 = std::make_unique<ResBlock>(base + ".res1", cs, cs, d, rng);
      if (s == cfg.attention_stage) {
        st.a1 = std::make_unique<SelfAttention2d>(base + ".attn0", cs, rng);
        st.a2 = std::make_unique<SelfAttention2d>(base + ".attn1", cs, rng);
      }
      if (s < 3) st.down = std::make_unique<Conv2d>(base + ".down", cs, cs, 3, 2, 1, rng);
      cin = cs;
    }

    for (int s = 0; s < 4; ++s) {
      affs.emplace_back("unet.aff" + std::to_string(s), cfg.aff.r_th[static_cast<size_t>(s)], cfg.aff.gamma_init);
    }

    // Up stages run deepest-first; each consumes the previous stage's
    // (upsampled) output concatenated with its AFF-filtered skip.
    for (int s = 3; s >= 0; --s) {
      auto& st = ups[static_cast<size_t>(s)];
      const std::string base = "unet.up" + std::to_string(s);
      const int64_t cs = ch[static_cast<size_t>(s)];
      const int64_t carry = (s == 3) ? ch[3] : ch[static_cast<size_t>(s + 1)];
      up_in_ch_[static_cast<size_t>(s)] = carry;
      st.r1 = std::make_unique<ResBlock>(base + ".res0", carry + cs, cs, d, rng);
      st.r2 = std::make_unique<ResBlock>(base + ".res1", cs, cs, d, rng);
      st.r3 = std::make_unique<ResBlock>(base + ".res2", cs, cs, d, rng);
      if (s == cfg.attention_stage) {
        st.a1 = std::make_unique<SelfAttention2d>(base + ".attn0", cs, rng);
        st.a2 = std::make_unique<SelfAttention2d>(base + ".attn1", cs, rng);
        st.a3 = std::make_unique<SelfAttention2d>(base + ".attn2", cs, rng);
      }
      if (s > 0) st.up_conv = std::make_unique<Conv2d>(base + ".up", cs, cs, 3, 1, 1, rng);
    }

    head_gn = std::make_unique<GroupNorm>("unet.head.gn", ch[0]);
    // Zero-init head: eps_hat = 0 at initialization, so an untrained model
    // reproduces its terminal condition exactly after one sampler step.
    head_conv = std::make_unique<Conv2d>("unet.head.conv", ch[0], cfg.in_channels, 3, 1, 1, rng, /*zero_init=*/true);
  }

  void check_inputs(const Tensor& it, double t, const Tensor& iterm) const {
    require_same_shape(it, iterm, "predictor conditioning");
    if (it.ndim() != 3 || it.dim(0) != cfg.in_channels) throw std::invalid_argument("predictor input has wrong channel count");
    if (it.dim(1) % 8 != 0 || it.dim(2) % 8 != 0 || it.dim(1) < 8 || it.dim(2) < 8) {
      throw std::invalid_argument("predictor input dims must be multiples of 8");
    }
    if (t < 0.0) throw std::invalid_argument("timestep must be >= 0");
  }

  Tensor forward(const Tensor& it, double t, const Tensor& iterm, bool train) {
    check_inputs(it, t, iterm);
    temb_ = temb2->forward(temb_act.forward(temb1->forward(time_embedding(t, cfg.time_embed_dim), train), train), train);

    Tensor x = stem->forward(concat_channels(it, iterm), train);
    std::array<Tensor, 4> skips;
    for (int s = 0; s < 4; ++s) {
      auto& st = downs[static_cast<size_t>(s)];
      x = st.r1->forward(x, temb_, train);
      if (st.a1) x = st.a1->forward(x, train);
      x = st.r2->forward(x, temb_, train);
      if (st.a2) x = st.a2->forward(x, train);
      skips[static_cast<size_t>(s)] = x;
      if (st.down) x = st.down->forward(x, train);
    }

    for (int s = 3; s >= 0; --s) {
      auto& st = ups[static_cast<size_t>(s)];
      Tensor filtered = affs[static_cast<size_t>(s)].forward(skips[static_cast<size_t>(s)], train);
      x = concat_channels(x, filtered);
      x = st.r1->forward(x, temb_, train);
      if (st.a1) x = st.a1->forward(x, train);
      x = st.r2->forward(x, temb_, train);
      if (st.a2) x = st.a2->forward(x, train);
      x = st.r3->forward(x, temb_, train);
      if (st.a3) x = st.a3->forward(x, train);
      if (st.up_conv) x = st.up_conv->forward(upsample_nearest2x(x), train);
    }
    return head_conv->forward(head_act.forward(head_gn->forward(x, train), train), train);
  }

  Tensor backward(const Tensor& geps) {
    Tensor gtemb({cfg.time_embed_dim});
    Tensor g = head_gn->backward(head_act.backward(head_conv->backward(geps)));

    // Up path in reverse execution order (stage 0 ran last), splitting each
    // stage's gradient into the carried path and its skip.
    std::array<Tensor, 4> gskips;
    for (int s = 0; s < 4; ++s) {
      auto& st = ups[static_cast<size_t>(s)];
      if (st.up_conv) g = upsample_nearest2x_backward(st.up_conv->backward(g));
      if (st.a3) g = st.a3->backward(g);
      g = st.r3->backward(g, gtemb);
      if (st.a2) g = st.a2->backward(g);
      g = st.r2->backward(g, gtemb);
      if (st.a1) g = st.a1->backward(g);
      g = st.r1->backward(g, gtemb);
      auto [gcarry, gskip] = split_channels(g, up_in_ch_[static_cast<size_t>(s)]);
      gskips[static_cast<size_t>(s)] = affs[static_cast<size_t>(s)].backward(gskip);
      g = std::move(gcarry);
    }

    // Down path: the deepest stage's output feeds the up path twice (carry
    // and skip), so both gradients combine there.
    g.add_(gskips[3]);
    for (int s = 3; s >= 0; --s) {
      auto& st = downs[static_cast<size_t>(s)];
      if (st.a2) g = st.a2->backward(g);
      g = st.r2->backward(g, gtemb);
      if (st.a1) g = st.a1->backward(g);
      g = st.r1->backward(g, gtemb);
      if (s > 0) {
        g = downs[static_cast<size_t>(s - 1)].down->backward(g);
        g.add_(gskips[static_cast<size_t>(s - 1)]);
      }
    }
    g = stem->backward(g);

    temb1->backward(temb_act.backward(temb2->backward(gtemb)));
    auto [git, giterm] = split_channels(g, cfg.in_channels);
    (void)giterm;  // the terminal condition is data, not a differentiated input
    return std::move(git);
  }

  void params(ParamList& out) {
    stem->params(out);
    temb1->params(out);
    temb2->params(out);
    for (auto& st : downs) {
      st.r1->params(out);
      st.r2->params(out);
      if (st.a1) st.a1->params(out);
      if (st.a2) st.a2->params(out);
      if (st.down) st.down->params(out);
    }
    for (auto& a : affs) a.params(out);
    for (int s = 3; s >= 0; --s) {
      auto& st = ups[static_cast<size_t>(s)];
      st.r1->params(out);
      st.r2->params(out);
      st.r3->params(out);
      if (st.a1) st.a1->params(out);
      if (st.a2) st.a2->params(out);
      if (st.a3) st.a3->params(out);
      if (st.up_conv) st.up_conv->params(out);
    }
    head_gn->params(out);
    head_conv->params(out);
  }
};

UNetPredictor::UNetPredictor(const PredictorConfig& cfg, uint64_t seed) : impl_(std::make_unique<Impl>(cfg, seed)) {}
UNetPredictor::~UNetPredictor() = default;

Image UNetPredictor::predict(const Image& i_t, double t, const Image& i_term) {
  return Image(impl_->forward(i_t.data, t, i_term.data, /*train=*/false), Range::kSigned);
}

int64_t UNetPredictor::channels() const { return impl_->cfg.in_channels; }

Tensor UNetPredictor::forward_train(const Tensor& i_t, double t, const Tensor& i_term) {
  return impl_->forward(i_t, t, i_term, /*train=*/true);
}

Tensor UNetPredictor::backward(const Tensor& geps) { return impl_->backward(geps); }

ParamList UNetPredictor::params() {
  ParamList out;
  impl_->params(out);
  return out;
}

const PredictorConfig& UNetPredictor::config() const { return impl_->cfg; }

int64_t UNetPredictor::count_parameters() {
  int64_t n = 0;
  for (const Param* p : params()) n += p->value.numel();
  return n;
}

int64_t count_parameters(const PredictorConfig& cfg) {
  UNetPredictor net(cfg, 0);
  return net.count_parameters();
}

}  // namespace ncdiff
