#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "ncdiff/nn.hpp"

namespace ncdiff {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

SelfAttention2d::SelfAttention2d(std::string name, int64_t channels, Rng& rng)
    : channels_(channels),
      norm_(name + ".norm", channels, std::min<int64_t>(8, channels)),
      q_(name + ".q", channels, channels, 1, 1, 0, rng),
      k_(name + ".k", channels, channels, 1, 1, 0, rng),
      v_(name + ".v", channels, channels, 1, 1, 0, rng),
      proj_(name + ".proj", channels, channels, 1, 1, 0, rng, /*zero_init=*/true) {}

Tensor SelfAttention2d::forward(const Tensor& x, bool train) {
  h_ = x.dim(1);
  w_ = x.dim(2);
  const int64_t c = channels_, n = h_ * w_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));

  Tensor xn = norm_.forward(x, train);
  Tensor q = q_.forward(xn, train);
  Tensor k = k_.forward(xn, train);
  Tensor v = v_.forward(xn, train);

  Tensor o({c, h_, w_});
  ECMap qm(q.data(), c, n), km(k.data(), c, n), vm(v.data(), c, n);

  if (train) {
    // Full attention matrix, cached for backward. Row i holds query i's
    // distribution over keys.
    attn_ = Tensor({n, n});
    EMap P(attn_.data(), n, n);
    P.noalias() = qm.transpose() * km;
    P *= scale;
    for (int64_t i = 0; i < n; ++i) {
      double* row = attn_.data() + i * n;
      double mx = row[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        s += row[j];
      }
      const double inv = 1.0 / s;
      for (int64_t j = 0; j < n; ++j) row[j] *= inv;
    }
    EMap(o.data(), c, n).noalias() = vm * P.transpose();
    qv_ = std::move(q);
    kv_ = std::move(k);
    vv_ = std::move(v);
  } else {
    // Streaming softmax over row blocks keeps memory bounded on big tiles.
    const int64_t blk = std::min<int64_t>(n, 512);
    EMat S(blk, n);
    EMap om(o.data(), c, n);
    for (int64_t i0 = 0; i0 < n; i0 += blk) {
      const int64_t rows = std::min(blk, n - i0);
      S.topRows(rows).noalias() = qm.middleCols(i0, rows).transpose() * km;
      S.topRows(rows) *= scale;
      for (int64_t r = 0; r < rows; ++r) {
        double mx = S(r, 0);
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, S(r, j));
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) {
          S(r, j) = std::exp(S(r, j) - mx);
          s += S(r, j);
        }
        S.row(r) *= 1.0 / s;
      }
      om.middleCols(i0, rows).noalias() = vm * S.topRows(rows).transpose();
    }
    attn_ = Tensor();
    qv_ = Tensor();
    kv_ = Tensor();
    vv_ = Tensor();
  }

  Tensor po = proj_.forward(o, train);
  po.add_(x);
  return po;
}

Tensor SelfAttention2d::backward(const Tensor& gy) {
  const int64_t c = channels_, n = h_ * w_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  if (attn_.numel() != n * n) throw std::logic_error("SelfAttention2d::backward without training forward");

  Tensor go = proj_.backward(gy);
  ECMap gom(go.data(), c, n);
  ECMap P(attn_.data(), n, n);
  ECMap qm(qv_.data(), c, n), km(kv_.data(), c, n), vm(vv_.data(), c, n);

  // o = v P^T
  Tensor gv({c, h_, w_});
  EMap(gv.data(), c, n).noalias() = gom * P;
  EMat gP(n, n);
  gP.noalias() = gom.transpose() * vm;

  // softmax rows: gS = P .* (gP - rowsum(gP .* P))
  EMat gS(n, n);
  for (int64_t i = 0; i < n; ++i) {
    const double dot = gP.row(i).cwiseProduct(P.row(i)).sum();
    gS.row(i) = P.row(i).cwiseProduct(gP.row(i).array().matrix() - EMat::Constant(1, n, dot));
  }

  Tensor gq({c, h_, w_}), gk({c, h_, w_});
  EMap(gq.data(), c, n).noalias() = km * gS.transpose() * scale;
  EMap(gk.data(), c, n).noalias() = qm * gS * scale;

  Tensor gxn = q_.backward(gq);
  gxn.add_(k_.backward(gk));
  gxn.add_(v_.backward(gv));
  Tensor gx = norm_.backward(gxn);
  gx.add_(gy);
  return gx;
}

void SelfAttention2d::params(ParamList& out) {
  norm_.params(out);
  q_.params(out);
  k_.params(out);
  v_.params(out);
  proj_.params(out);
}

}  // namespace ncdiff
