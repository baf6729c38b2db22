#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncdiff {

/// Dense row-major tensor of doubles. Rank is arbitrary but in practice
/// everything here is [C,H,W] feature maps, [Cout,Cin,k,k] conv weights,
/// or flat vectors. Value semantics; copies are real copies.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double value);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  // 3-D accessors for [C,H,W] maps.
  double& at(int64_t c, int64_t y, int64_t x) {
    return v_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }
  double at(int64_t c, int64_t y, int64_t x) const {
    return v_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }

  void fill(double value);
  void zero() { fill(0.0); }

  // In-place elementwise arithmetic. Shapes must match exactly.
  Tensor& add_(const Tensor& o);
  Tensor& add_scaled_(const Tensor& o, double s);  // this += s * o
  Tensor& sub_(const Tensor& o);
  Tensor& mul_(const Tensor& o);
  Tensor& scale_(double s);
  Tensor& clamp_(double lo, double hi);

  // Reductions (sequential, deterministic).
  double sum() const;
  double mean() const;
  double min() const;
  double max() const;
  double abs_max() const;
  double dot(const Tensor& o) const;
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> v_;
};

// Out-of-place helpers.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// Mean of squared differences over all elements.
double mse(const Tensor& a, const Tensor& b);

/// Largest absolute elementwise difference.
double max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what = "tensor op");

}  // namespace ncdiff
