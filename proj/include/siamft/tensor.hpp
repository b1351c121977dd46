#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace siamft {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// out = W x + b
inline void affine(const Matrix& w, std::span<const double> x,
                   std::span<const double> b, std::span<double> out) {
  assert(w.cols() == x.size() && w.rows() == out.size() && b.size() == out.size());
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = b[r] + dot(w.row(r), x);
}

// dx += W^T dy
inline void accumulate_transposed(const Matrix& w, std::span<const double> dy,
                                  std::span<double> dx) {
  assert(w.rows() == dy.size() && w.cols() == dx.size());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) dx[c] += g * row[c];
  }
}

// G += dy x^T
inline void accumulate_outer(Matrix& g, std::span<const double> dy,
                             std::span<const double> x) {
  assert(g.rows() == dy.size() && g.cols() == x.size());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const double s = dy[r];
    if (s == 0.0) continue;
    auto row = g.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += s * x[c];
  }
}

inline void add_to(std::span<double> acc, std::span<const double> v, double scale = 1.0) {
  assert(acc.size() == v.size());
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace siamft
