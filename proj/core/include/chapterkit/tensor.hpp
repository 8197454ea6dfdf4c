#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace chapterkit {

class Rng;

// Dense row-major array of doubles. Rank 0 (scalar), 1, and 2 are the only
// ranks the model needs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<size_t> shape, double v);
  static Tensor row(std::initializer_list<double> values);
  // I.i.d. normal(0, stddev) entries.
  static Tensor randn(std::vector<size_t> shape, Rng& rng, double stddev = 1.0);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t ndim() const { return shape_.size(); }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; rank-1 tensors behave as a single row.
  size_t rows() const;
  size_t cols() const;

  double& at(size_t i) { return data_[i]; }
  double at(size_t i) const { return data_[i]; }
  double& at(size_t r, size_t c) { return data_[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols() + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double item() const;  // requires numel() == 1

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(double v);
  void add_in_place(const Tensor& other);  // shapes must match

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

}  // namespace chapterkit
