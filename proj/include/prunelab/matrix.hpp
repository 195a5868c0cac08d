#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

// Dense row-major matrix. float in the training path, double in test oracles.
template <typename T>
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(size(), T(0)) {}

  static Matrix randn(int rows, int cols, Rng& rng, T stddev) {
    Matrix m(rows, cols);
    for (auto& v : m.data_) v = static_cast<T>(rng.normal(0.0, static_cast<double>(stddev)));
    return m;
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::int64_t size() const { return static_cast<std::int64_t>(rows_) * cols_; }
  bool empty() const { return size() == 0; }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const T* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }

  void scale(T a) {
    for (auto& x : data_) x *= a;
  }

  // this += alpha * other
  void add_scaled(const Matrix& other, T alpha) {
    if (!same_shape(other)) fail(Errc::shape_mismatch, "add_scaled " + shape_str(other));
    for (std::int64_t i = 0; i < size(); ++i) data_[i] += alpha * other.data_[i];
  }

  bool all_finite() const {
    for (const auto& x : data_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  T max_abs() const {
    T m = T(0);
    for (const auto& x : data_) m = std::max(m, std::abs(x));
    return m;
  }

  // Compacted copies with the given sorted index lists removed.
  Matrix removed_rows(const std::vector<int>& rows) const {
    check_removal(rows, rows_, "row");
    Matrix out(rows_ - static_cast<int>(rows.size()), cols_);
    int w = 0;
    std::size_t k = 0;
    for (int r = 0; r < rows_ && w < out.rows_; ++r) {
      if (k < rows.size() && rows[k] == r) {
        ++k;
        continue;
      }
      for (int c = 0; c < cols_; ++c) out(w, c) = (*this)(r, c);
      ++w;
    }
    return out;
  }

  Matrix removed_cols(const std::vector<int>& cols) const {
    check_removal(cols, cols_, "col");
    Matrix out(rows_, cols_ - static_cast<int>(cols.size()));
    for (int r = 0; r < rows_; ++r) {
      int w = 0;
      std::size_t k = 0;
      for (int c = 0; c < cols_ && w < out.cols_; ++c) {
        if (k < cols.size() && cols[k] == c) {
          ++k;
          continue;
        }
        out(r, w++) = (*this)(r, c);
      }
    }
    return out;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }
  std::string shape_str(const Matrix& o) const { return shape_str() + " vs " + o.shape_str(); }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  static void check_removal(const std::vector<int>& idx, int bound, const char* axis) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= bound || (k > 0 && idx[k] <= idx[k - 1]))
        fail(Errc::index_out_of_range, std::string(axis) + " removal list bad at index " +
                                           std::to_string(idx[k]) + " (bound " +
                                           std::to_string(bound) + ")");
    }
  }

  int rows_, cols_;
  std::vector<T> data_;
};

template <typename T>
std::vector<T> removed_indices(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(v.size() - idx.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (k < idx.size() && idx[k] == static_cast<int>(i)) {
      ++k;
      continue;
    }
    out.push_back(v[i]);
  }
  return out;
}

// Lower Cholesky factor of a symmetric matrix (lower triangle is read).
// Throws not_positive_definite on a non-positive pivot, which callers treat
// as "increase damping and retry".
template <typename T>
Matrix<T> cholesky_lower(const Matrix<T>& h) {
  const int d = h.rows();
  if (h.cols() != d) fail(Errc::shape_mismatch, "cholesky needs square, got " + h.shape_str());
  Matrix<T> l(d, d);
  for (int j = 0; j < d; ++j) {
    T diag = h(j, j);
    for (int k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > T(0)) || !std::isfinite(static_cast<double>(diag)))
      fail(Errc::not_positive_definite, "pivot " + std::to_string(j));
    const T ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (int i = j + 1; i < d; ++i) {
      T s = h(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

// In-place triangular solves against a precomputed lower factor: L L^T x = b.
template <typename T>
void cholesky_solve_inplace(const Matrix<T>& l, T* b) {
  const int d = l.rows();
  for (int i = 0; i < d; ++i) {
    T s = b[i];
    for (int k = 0; k < i; ++k) s -= l(i, k) * b[k];
    b[i] = s / l(i, i);
  }
  for (int i = d - 1; i >= 0; --i) {
    T s = b[i];
    for (int k = i + 1; k < d; ++k) s -= l(k, i) * b[k];
    b[i] = s / l(i, i);
  }
}

// Solve H x = b for symmetric positive-definite H.
template <typename T>
std::vector<T> solve_spd(const Matrix<T>& h, const std::vector<T>& b) {
  if (h.rows() != static_cast<int>(b.size()))
    fail(Errc::shape_mismatch,
         "solve_spd " + h.shape_str() + " vs b[" + std::to_string(b.size()) + "]");
  const Matrix<T> l = cholesky_lower(h);
  std::vector<T> x = b;
  cholesky_solve_inplace(l, x.data());
  return x;
}

// Multi-RHS variant: solves H X = B column by column off one factorization.
template <typename T>
Matrix<T> solve_spd_multi(const Matrix<T>& h, const Matrix<T>& b) {
  if (h.rows() != b.rows())
    fail(Errc::shape_mismatch, "solve_spd_multi " + h.shape_str() + " vs " + b.shape_str());
  const Matrix<T> l = cholesky_lower(h);
  Matrix<T> x = b;
  std::vector<T> col(static_cast<std::size_t>(b.rows()));
  for (int c = 0; c < b.cols(); ++c) {
    for (int r = 0; r < b.rows(); ++r) col[r] = b(r, c);
    cholesky_solve_inplace(l, col.data());
    for (int r = 0; r < b.rows(); ++r) x(r, c) = col[r];
  }
  return x;
}

}  // namespace prunelab
