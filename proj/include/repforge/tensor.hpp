#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace repforge {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

// Dense n-dimensional array of doubles, rank 1..4, flat row-major storage
// (last axis fastest). Public operations never mutate their inputs; a tensor
// handed out by one of them can be shared read-only across threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);               // zero-filled
  Tensor(Shape shape, std::vector<double> data);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  // Same flat data under a new shape; element counts must agree.
  Tensor reshape(const Shape& new_shape) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// c[i][j] = sum_k a[i][k] * b[k][j]; both operands rank-2.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class Reduce { sum, mean, max };

Tensor reduce(const Tensor& t, Reduce mode);                    // over all axes
Tensor reduce(const Tensor& t, Reduce mode, std::size_t axis);  // drops the axis

namespace detail {

// Raw row-major matrix kernels shared by matmul and the conv/dense layers.
// All of them overwrite C.
void mm_nn(const double* a, const double* b, double* c, std::size_t m,
           std::size_t k, std::size_t n);  // C[m,n] = A[m,k] B[k,n]
void mm_tn(const double* a, const double* b, double* c, std::size_t k,
           std::size_t m, std::size_t n);  // C[m,n] = A[k,m]^T B[k,n]
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t k,
               std::size_t m, std::size_t n);  // C += A^T B
void mm_nt(const double* a, const double* b, double* c, std::size_t m,
           std::size_t k, std::size_t n);  // C[m,n] = A[m,k] B[n,k]^T

}  // namespace detail

}  // namespace repforge
