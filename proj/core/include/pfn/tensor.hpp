#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pfn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  void enable_grad();
  void zero_grad();
  std::span<double> grad() noexcept { return grad_; }
  std::span<const double> grad() const noexcept { return grad_; }

  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
};

}  // namespace pfn
