#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "ncdiff/aff.hpp"
#include "ncdiff/predictor.hpp"
#include "ncdiff/rng.hpp"
#include "support/gradcheck.hpp"

using namespace ncdiff;

namespace {

PredictorConfig tiny_config() {
  PredictorConfig cfg;
  cfg.in_channels = 1;
  cfg.base_channels = 8;
  cfg.stage_multipliers = {1, 2, 2, 2};
  cfg.attention_stage = 1;
  cfg.time_embed_dim = 16;
  return cfg;
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_uniform(t, lo, hi);
  return t;
}

// Nets initialize with zeroed output heads; tests of gradient flow and
// conditioning need weights that actually mix, so perturb everything.
void randomize_params(UNetPredictor& net, uint64_t seed, double scale) {
  Rng rng(seed);
  for (Param* p : net.params()) {
    Tensor noise(p->value.shape());
    rng.fill_uniform(noise, -scale, scale);
    p->value.add_(noise);
  }
}

}  // namespace

TEST_CASE("radial mask follows the threshold rule") {
  SUBCASE("gamma zero gives all ones") {
    Tensor m = build_radial_mask(8, 8, 0.5, 0.0);
    CHECK(m.min() == 1.0);
    CHECK(m.max() == 1.0);
  }
  SUBCASE("threshold above the corner radius gives all ones") {
    Tensor m = build_radial_mask(7, 5, 1.5, 3.0);
    CHECK(m.min() == 1.0);
    CHECK(m.max() == 1.0);
  }
  SUBCASE("zero threshold boosts every bin including DC") {
    Tensor m = build_radial_mask(6, 6, 0.0, 1.0);
    CHECK(m.min() == 2.0);
    CHECK(m.max() == 2.0);
  }
  SUBCASE("bins below threshold are exactly one") {
    // Multiplying a spectrum by exactly 1.0 leaves those coefficients
    // bitwise unchanged, which is the low-frequency preservation contract.
    Tensor m = build_radial_mask(16, 16, 0.5, 0.7);
    CHECK(m[0] == 1.0);      // DC
    CHECK(m[1] == 1.0);      // (0,1): r = 2/16 * 2 = 0.125
    CHECK(m[15] == 1.0);     // (0,-1) alias
    bool any_boost = false, any_pass = false;
    for (int64_t k = 0; k < m.numel(); ++k) {
      CHECK((m[k] == 1.0 || m[k] == 1.7));
      any_boost = any_boost || m[k] != 1.0;
      any_pass = any_pass || m[k] == 1.0;
    }
    CHECK(any_boost);
    CHECK(any_pass);
  }
  SUBCASE("mask is symmetric under frequency negation") {
    Tensor m = build_radial_mask(12, 10, 0.6, 0.3);
    for (int64_t u = 0; u < 12; ++u) {
      for (int64_t v = 0; v < 10; ++v) {
        const int64_t un = (12 - u) % 12, vn = (10 - v) % 10;
        CHECK(m[u * 10 + v] == m[un * 10 + vn]);
      }
    }
  }
}

TEST_CASE("aff filter identity and low-frequency behavior") {
  Rng rng(1212);
  SUBCASE("gamma zero is a bitwise identity") {
    AFFLayer aff("aff", 0.5, 0.0);
    Tensor x = random_tensor({3, 16, 16}, rng);
    Tensor y = aff.forward(x, false);
    CHECK(max_abs_diff(x, y) == 0.0);
  }
  SUBCASE("constant input passes through any gamma") {
    AFFLayer aff("aff", 0.3, 2.5);
    Tensor x({2, 12, 12});
    x.fill(0.8);
    Tensor y = aff.forward(x, false);
    CHECK(max_abs_diff(x, y) <= 1e-5);
    CHECK(max_abs_diff(x, y) <= 1e-12);
  }
  SUBCASE("single high-frequency mode doubles at gamma one") {
    AFFLayer aff("aff", 0.5, 1.0);
    Tensor x({1, 8, 8});
    for (int64_t i = 0; i < 8; ++i) {
      for (int64_t j = 0; j < 8; ++j) x.at(0, i, j) = std::cos(2.0 * M_PI * 3.0 * static_cast<double>(i) / 8.0);
    }
    Tensor y = aff.forward(x, false);  // mode (3,0): r = 0.75 >= 0.5
    Tensor doubled = scale(x, 2.0);
    CHECK(max_abs_diff(y, doubled) <= 1e-10);
  }
  SUBCASE("low-frequency mode is untouched") {
    AFFLayer aff("aff", 0.5, 1.0);
    Tensor x({1, 16, 16});
    for (int64_t i = 0; i < 16; ++i) {
      for (int64_t j = 0; j < 16; ++j) x.at(0, i, j) = std::sin(2.0 * M_PI * static_cast<double>(j) / 16.0);
    }
    Tensor y = aff.forward(x, false);  // mode (0,1): r = 0.125 < 0.5
    CHECK(max_abs_diff(x, y) <= 1e-12);
  }
}

TEST_CASE("aff filter is linear and self-adjoint") {
  Rng rng(1313);
  AFFLayer aff("aff", 0.4, 0.8);
  Tensor x = random_tensor({2, 10, 14}, rng);
  Tensor y = random_tensor({2, 10, 14}, rng);
  Tensor combo = add(scale(x, 1.7), scale(y, -0.6));
  Tensor lhs = aff.forward(combo, false);
  Tensor rhs = add(scale(aff.forward(x, false), 1.7), scale(aff.forward(y, false), -0.6));
  CHECK(max_abs_diff(lhs, rhs) <= 1e-5);
  CHECK(max_abs_diff(lhs, rhs) <= 1e-11);

  const double xy = aff.forward(x, false).dot(y);
  const double yx = x.dot(aff.forward(y, false));
  CHECK(xy == doctest::Approx(yx).epsilon(1e-12));
}

TEST_CASE("aff gradients match finite differences") {
  Rng rng(1414);
  AFFLayer aff("aff", 0.4, 0.3);
  Tensor x = random_tensor({1, 8, 8}, rng);
  Tensor w = random_tensor({1, 8, 8}, rng);  // fixed projection makes the loss scalar

  aff.forward(x, true);
  aff.gamma.grad.zero();
  Tensor gx = aff.backward(w);

  SUBCASE("with respect to gamma") {
    const double analytic = aff.gamma.grad[0];
    const double orig = aff.gamma.value[0];
    aff.gamma.value[0] = orig + 1e-3;
    const double lp = aff.forward(x, false).dot(w);
    aff.gamma.value[0] = orig - 1e-3;
    const double lm = aff.forward(x, false).dot(w);
    aff.gamma.value[0] = orig;
    const double fd = (lp - lm) / 2e-3;
    CHECK(std::abs(fd - analytic) / std::max(std::abs(fd), 1e-12) <= 1e-2);
    CHECK(std::abs(fd - analytic) / std::max(std::abs(fd), 1e-12) <= 1e-9);  // linear in gamma
  }
  SUBCASE("with respect to the input") {
    const double err = testing::max_grad_error(
        x, [&] { return aff.forward(x, false).dot(w); }, gx);
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("predictor output is zero at init and matches input shape") {
  UNetPredictor net(tiny_config(), 77);
  Rng rng(1515);
  Image it(random_tensor({1, 16, 16}, rng), Range::kSigned);
  Image iterm(random_tensor({1, 16, 16}, rng), Range::kSigned);
  Image eps = net.predict(it, 3.0, iterm);
  REQUIRE(eps.data.same_shape(it.data));
  CHECK(eps.data.abs_max() == 0.0);  // zero-initialized output head

  PredictorConfig rgb = tiny_config();
  rgb.in_channels = 3;
  UNetPredictor net3(rgb, 77);
  Image it3(random_tensor({3, 32, 32}, rng), Range::kSigned);
  Image iterm3(random_tensor({3, 32, 32}, rng), Range::kSigned);
  CHECK(net3.predict(it3, 10.0, iterm3).data.same_shape(it3.data));
}

TEST_CASE("predictor validates its inputs") {
  UNetPredictor net(tiny_config(), 1);
  Rng rng(1616);
  Image ok(random_tensor({1, 16, 16}, rng), Range::kSigned);
  Image wrong_dims(random_tensor({1, 12, 16}, rng), Range::kSigned);
  Image wrong_shape(random_tensor({1, 16, 24}, rng), Range::kSigned);
  CHECK_THROWS_AS(net.predict(ok, 1.0, wrong_shape), std::invalid_argument);
  CHECK_THROWS_AS(net.predict(wrong_dims, 1.0, wrong_dims), std::invalid_argument);
  CHECK_THROWS_AS(net.predict(ok, -1.0, ok), std::invalid_argument);

  PredictorConfig bad = tiny_config();
  bad.aff.r_th = {0.3, 0.4, 0.5, 0.6};  // increasing with depth violates the ordering
  CHECK_THROWS_AS(UNetPredictor(bad, 1), std::invalid_argument);
}

TEST_CASE("predictor is deterministic and conditioning is live") {
  UNetPredictor net(tiny_config(), 99);
  randomize_params(net, 5, 0.05);
  Rng rng(1717);
  Image it(random_tensor({1, 16, 16}, rng), Range::kSigned);
  Image iterm(random_tensor({1, 16, 16}, rng), Range::kSigned);

  Image a = net.predict(it, 4.0, iterm);
  Image b = net.predict(it, 4.0, iterm);
  CHECK(max_abs_diff(a.data, b.data) == 0.0);

  Image iterm2(random_tensor({1, 16, 16}, rng), Range::kSigned);
  Image c = net.predict(it, 4.0, iterm2);
  CHECK(max_abs_diff(a.data, c.data) > 0.0);

  Image d = net.predict(it, 5.0, iterm);  // timestep is live too
  CHECK(max_abs_diff(a.data, d.data) > 0.0);
}

TEST_CASE("predictor stays finite on inputs in [-2, 2]") {
  UNetPredictor net(tiny_config(), 42);
  randomize_params(net, 6, 0.05);
  Rng rng(1818);
  for (int trial = 0; trial < 3; ++trial) {
    Image it(random_tensor({1, 16, 16}, rng, -2.0, 2.0), Range::kSigned);
    Image iterm(random_tensor({1, 16, 16}, rng, -2.0, 2.0), Range::kSigned);
    Image eps = net.predict(it, 1000.0, iterm);
    CHECK(eps.data.all_finite());
  }
}

TEST_CASE("parameter census") {
  PredictorConfig cfg = tiny_config();
  const int64_t n1 = count_parameters(cfg);
  const int64_t n2 = count_parameters(cfg);
  CHECK(n1 == n2);
  CHECK(n1 > 0);

  PredictorConfig no_attn = cfg;
  no_attn.attention_stage = -1;
  CHECK(count_parameters(no_attn) < n1);

  // The frequency filters contribute exactly one scalar per skip level.
  UNetPredictor net(cfg, 0);
  int64_t aff_params = 0, aff_scalars = 0;
  for (Param* p : net.params()) {
    if (p->name.find(".aff") != std::string::npos) {
      ++aff_params;
      aff_scalars += p->value.numel();
    }
  }
  CHECK(aff_params == 4);
  CHECK(aff_scalars == 4);

  UNetPredictor nets[2] = {UNetPredictor(cfg, 123), UNetPredictor(cfg, 123)};
  ParamList pa = nets[0].params(), pb = nets[1].params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(max_abs_diff(pa[i]->value, pb[i]->value) == 0.0);
  }
}

TEST_CASE("gamma gradient through the full network matches finite differences") {
  UNetPredictor net(tiny_config(), 31);
  randomize_params(net, 8, 0.05);
  Rng rng(1919);
  Tensor it = random_tensor({1, 8, 8}, rng);
  Tensor iterm = random_tensor({1, 8, 8}, rng);
  Tensor w = random_tensor({1, 8, 8}, rng);

  ParamList params = net.params();
  zero_grads(params);
  net.forward_train(it, 2.0, iterm);
  net.backward(w);  // loss = sum(eps .* w)

  int checked = 0;
  for (Param* p : params) {
    if (p->name.find(".aff") == std::string::npos) continue;
    const double analytic = p->grad[0];
    const double orig = p->value[0];
    p->value[0] = orig + 1e-3;
    const double lp = net.forward_train(it, 2.0, iterm).dot(w);
    p->value[0] = orig - 1e-3;
    const double lm = net.forward_train(it, 2.0, iterm).dot(w);
    p->value[0] = orig;
    const double fd = (lp - lm) / 2e-3;
    CHECK(std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-10}) <= 1e-2);
    ++checked;
  }
  CHECK(checked == 4);
}

TEST_CASE("gradient reaches every parameter after randomization") {
  UNetPredictor net(tiny_config(), 13);
  randomize_params(net, 9, 0.05);
  Rng rng(2020);
  // 16x16 keeps the deepest skip at 2x2: a 1x1 map is pure DC, which would
  // leave that level's gamma with a legitimately zero gradient.
  Tensor it = random_tensor({1, 16, 16}, rng);
  Tensor iterm = random_tensor({1, 16, 16}, rng);
  Tensor w = random_tensor({1, 16, 16}, rng);

  ParamList params = net.params();
  zero_grads(params);
  net.forward_train(it, 7.0, iterm);
  net.backward(w);
  for (Param* p : params) {
    INFO("param ", p->name);
    CHECK(p->grad.abs_max() > 0.0);
  }
}

TEST_CASE("input gradient matches finite differences") {
  UNetPredictor net(tiny_config(), 57);
  randomize_params(net, 10, 0.05);
  Rng rng(2121);
  Tensor it = random_tensor({1, 8, 8}, rng);
  Tensor iterm = random_tensor({1, 8, 8}, rng);
  Tensor w = random_tensor({1, 8, 8}, rng);

  zero_grads(net.params());
  net.forward_train(it, 2.0, iterm);
  Tensor git = net.backward(w);
  const double err = testing::max_grad_error(
      it, [&] { return net.forward_train(it, 2.0, iterm).dot(w); }, git, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("sampled parameter gradients match finite differences") {
  UNetPredictor net(tiny_config(), 58);
  randomize_params(net, 11, 0.05);
  Rng rng(2222);
  Tensor it = random_tensor({1, 8, 8}, rng);
  Tensor iterm = random_tensor({1, 8, 8}, rng);
  Tensor w = random_tensor({1, 8, 8}, rng);

  ParamList params = net.params();
  zero_grads(params);
  net.forward_train(it, 3.0, iterm);
  net.backward(w);

  Rng pick(2323);
  for (int trial = 0; trial < 20; ++trial) {
    Param* p = params[static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(params.size()) - 1))];
    const int64_t i = pick.uniform_int(0, p->value.numel() - 1);
    const double analytic = p->grad[i];
    const double orig = p->value[i];
    p->value[i] = orig + 1e-5;
    const double lp = net.forward_train(it, 3.0, iterm).dot(w);
    p->value[i] = orig - 1e-5;
    const double lm = net.forward_train(it, 3.0, iterm).dot(w);
    p->value[i] = orig;
    const double fd = (lp - lm) / 2e-5;
    INFO("param ", p->name, " index ", i);
    CHECK(std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6}) <= 1e-3);
  }
}

TEST_CASE("predictor trains toward a fixed target") {
  UNetPredictor net(tiny_config(), 71);
  Rng rng(2424);
  Tensor it = random_tensor({1, 16, 16}, rng);
  Tensor iterm = random_tensor({1, 16, 16}, rng);
  Tensor target = random_tensor({1, 16, 16}, rng, -0.3, 0.3);

  ParamList params = net.params();
  Adam opt(params, 3e-3);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 30; ++step) {
    zero_grads(params);
    Tensor eps = net.forward_train(it, 5.0, iterm);
    const double loss = mse(eps, target);
    Tensor g = sub(eps, target);
    g.scale_(2.0 / static_cast<double>(g.numel()));
    net.backward(g);
    opt.step();
    if (step == 0) first = loss;
    last = loss;
  }
  CHECK(last < 0.2 * first);
}
