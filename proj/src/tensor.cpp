#include "repforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace repforge {

namespace {

std::size_t checked_element_count(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw std::invalid_argument("tensor rank must be 1..4, got shape " +
                                shape_str(shape));
  }
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) {
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  shape_str(shape));
    }
    n *= e;
  }
  return n;
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(checked_element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_element_count(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshape(const Shape& new_shape) const {
  if (checked_element_count(new_shape) != data_.size()) {
    throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " +
                                shape_str(new_shape) +
                                ": element counts differ");
  }
  return Tensor(new_shape, data_);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor c({m, n});
  detail::mm_nn(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

Tensor reduce(const Tensor& t, Reduce mode) {
  const double* p = t.data();
  const std::size_t n = t.size();
  double acc;
  switch (mode) {
    case Reduce::sum:
    case Reduce::mean: {
      acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += p[i];
      if (mode == Reduce::mean) acc /= static_cast<double>(n);
      break;
    }
    case Reduce::max: {
      acc = p[0];
      for (std::size_t i = 1; i < n; ++i) acc = std::max(acc, p[i]);
      break;
    }
    default:
      throw std::invalid_argument("reduce: unknown mode");
  }
  return Tensor({1}, {acc});
}

Tensor reduce(const Tensor& t, Reduce mode, std::size_t axis) {
  if (axis >= t.rank()) {
    throw std::invalid_argument(
        "reduce: axis " + std::to_string(axis) + " out of range for shape " +
        shape_str(t.shape()));
  }
  // Iterate as outer x axis x inner, where inner is the product of the
  // extents after `axis`.
  std::size_t outer = 1, inner = 1;
  const std::size_t extent = t.extent(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= t.extent(i);
  for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.extent(i);

  Shape out_shape;
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i != axis) out_shape.push_back(t.extent(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor out(out_shape);
  const double* src = t.data();
  double* dst = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const double* col = src + o * extent * inner + in;
      double acc = (mode == Reduce::max) ? -std::numeric_limits<double>::infinity()
                                         : 0.0;
      for (std::size_t a = 0; a < extent; ++a) {
        const double v = col[a * inner];
        if (mode == Reduce::max) {
          acc = std::max(acc, v);
        } else {
          acc += v;
        }
      }
      if (mode == Reduce::mean) acc /= static_cast<double>(extent);
      dst[o * inner + in] = acc;
    }
  }
  return out;
}

namespace detail {

void mm_nn(const double* a, const double* b, double* c, std::size_t m,
           std::size_t k, std::size_t n) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void mm_tn(const double* a, const double* b, double* c, std::size_t k,
           std::size_t m, std::size_t n) {
  std::fill(c, c + m * n, 0.0);
  mm_tn_acc(a, b, c, k, m, n);
}

void mm_tn_acc(const double* a, const double* b, double* c, std::size_t k,
               std::size_t m, std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void mm_nt(const double* a, const double* b, double* c, std::size_t m,
           std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
}

}  // namespace detail

}  // namespace repforge
