#include "ncdiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ncdiff {

static size_t checked_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  return static_cast<size_t>(n);
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)), v_(checked_numel(shape_), 0.0) {}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

void Tensor::fill(double value) { std::fill(v_.begin(), v_.end(), value); }

Tensor& Tensor::add_(const Tensor& o) {
  require_same_shape(*this, o, "add_");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  return *this;
}

Tensor& Tensor::add_scaled_(const Tensor& o, double s) {
  require_same_shape(*this, o, "add_scaled_");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] += s * o.v_[i];
  return *this;
}

Tensor& Tensor::sub_(const Tensor& o) {
  require_same_shape(*this, o, "sub_");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
  return *this;
}

Tensor& Tensor::mul_(const Tensor& o) {
  require_same_shape(*this, o, "mul_");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] *= o.v_[i];
  return *this;
}

Tensor& Tensor::scale_(double s) {
  for (double& x : v_) x *= s;
  return *this;
}

Tensor& Tensor::clamp_(double lo, double hi) {
  for (double& x : v_) x = std::min(hi, std::max(lo, x));
  return *this;
}

double Tensor::sum() const {
  double s = 0.0;
  for (double x : v_) s += x;
  return s;
}

double Tensor::mean() const { return v_.empty() ? 0.0 : sum() / static_cast<double>(v_.size()); }

double Tensor::min() const {
  double m = std::numeric_limits<double>::infinity();
  for (double x : v_) m = std::min(m, x);
  return m;
}

double Tensor::max() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v_) m = std::max(m, x);
  return m;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double x : v_) m = std::max(m, std::abs(x));
  return m;
}

double Tensor::dot(const Tensor& o) const {
  require_same_shape(*this, o, "dot");
  double s = 0.0;
  for (size_t i = 0; i < v_.size(); ++i) s += v_[i] * o.v_[i];
  return s;
}

bool Tensor::all_finite() const {
  for (double x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  r.add_(b);
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  r.sub_(b);
  return r;
}

Tensor scale(const Tensor& a, double s) {
  Tensor r = a;
  r.scale_(s);
  return r;
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return a.numel() ? s / static_cast<double>(a.numel()) : 0.0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace ncdiff
