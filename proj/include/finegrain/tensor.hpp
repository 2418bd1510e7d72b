#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace finegrain {

// Dense row-major block of doubles. All model math runs at 64-bit precision.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v);
  void zero() { fill(0.0); }
  // Changes the shape without touching storage; element counts must agree.
  void reshape(std::vector<int> shape);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t element_count(const std::vector<int>& shape);

// Elementwise helpers used by the layers.
void add_inplace(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& dst, double factor);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// FNV-1a over the raw bytes; used to prove frozen parameters never move.
std::uint64_t hash_bytes(const void* data, std::size_t bytes, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace finegrain
