#pragma once

// Dense NN primitives with exact manual backward passes. Forward order of
// reductions is fixed (BLAS gemm + sequential loops), so repeated calls on the
// same inputs are bitwise identical.

#include <cblas.h>

#include <cmath>
#include <limits>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/matrix.hpp"

namespace prunelab {

namespace detail {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  const CBLAS_TRANSPOSE ta = trans_a ? CblasTrans : CblasNoTrans;
  const CBLAS_TRANSPOSE tb = trans_b ? CblasTrans : CblasNoTrans;
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    static_assert(std::is_same_v<T, double>);
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

}  // namespace detail

// c = alpha * op(a) op(b) + beta * c, shapes checked against c.
template <typename T>
void matmul_into(Matrix<T>& c, const Matrix<T>& a, const Matrix<T>& b, bool trans_a = false,
                 bool trans_b = false, T alpha = T(1), T beta = T(0)) {
  const int am = trans_a ? a.cols() : a.rows();
  const int ak = trans_a ? a.rows() : a.cols();
  const int bk = trans_b ? b.cols() : b.rows();
  const int bn = trans_b ? b.rows() : b.cols();
  if (ak != bk || c.rows() != am || c.cols() != bn)
    fail(Errc::shape_mismatch, "matmul " + a.shape_str() + (trans_a ? "^T" : "") + " * " +
                                   b.shape_str() + (trans_b ? "^T" : "") + " -> " + c.shape_str());
  detail::gemm<T>(trans_a, trans_b, am, bn, ak, alpha, a.data(), a.cols(), b.data(), b.cols(),
                  beta, c.data(), c.cols());
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b, bool trans_a = false,
                 bool trans_b = false) {
  Matrix<T> c(trans_a ? a.cols() : a.rows(), trans_b ? b.rows() : b.cols());
  matmul_into(c, a, b, trans_a, trans_b);
  return c;
}

// Backward of c = a*b given dc: da = dc*b^T, db = a^T*dc (accumulated).
template <typename T>
void matmul_backward(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& dc, Matrix<T>& da,
                     Matrix<T>& db) {
  matmul_into(da, dc, b, false, true, T(1), T(1));
  matmul_into(db, a, dc, true, false, T(1), T(1));
}

// Row-wise softmax. -inf entries (masked) come out as exact zeros.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    T sum = T(0);
    for (int c = 0; c < x.cols(); ++c) {
      const T e = std::exp(x(r, c) - mx);
      y(r, c) = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int c = 0; c < x.cols(); ++c) y(r, c) *= inv;
  }
  return y;
}

// dx from (y, dy) where y = softmax_rows(x): dx = y * (dy - <dy, y>).
template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy) {
  if (!y.same_shape(dy)) fail(Errc::shape_mismatch, "softmax_backward " + y.shape_str(dy));
  Matrix<T> dx(y.rows(), y.cols());
  for (int r = 0; r < y.rows(); ++r) {
    T dot = T(0);
    for (int c = 0; c < y.cols(); ++c) dot += dy(r, c) * y(r, c);
    for (int c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (dy(r, c) - dot);
  }
  return dx;
}

// Row-wise norm: y_j = g_j * x_j / sqrt(sum_k x_k^2 + eps).
//
// The normalizer is the row's L2 energy, not the mean square, so removing a
// zero-valued channel leaves every surviving output bit-for-bit unchanged --
// the property that makes physically shrunk models match masked ones. A gain
// vector initialized to sqrt(width) reproduces the usual mean-square scaling.
inline constexpr double kRmsEps = 1e-6;

template <typename T>
Matrix<T> rmsnorm_rows(const Matrix<T>& x, const std::vector<T>& gain) {
  if (x.cols() != static_cast<int>(gain.size()))
    fail(Errc::shape_mismatch,
         "rmsnorm " + x.shape_str() + " vs gain[" + std::to_string(gain.size()) + "]");
  Matrix<T> y(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    T s = T(0);
    for (int c = 0; c < x.cols(); ++c) s += x(r, c) * x(r, c);
    const T inv = T(1) / std::sqrt(s + static_cast<T>(kRmsEps));
    for (int c = 0; c < x.cols(); ++c) y(r, c) = gain[c] * x(r, c) * inv;
  }
  return y;
}

template <typename T>
void rmsnorm_backward(const Matrix<T>& x, const std::vector<T>& gain, const Matrix<T>& dy,
                      Matrix<T>& dx, std::vector<T>& dgain) {
  if (!x.same_shape(dy)) fail(Errc::shape_mismatch, "rmsnorm_backward " + x.shape_str(dy));
  for (int r = 0; r < x.rows(); ++r) {
    T s = T(0);
    for (int c = 0; c < x.cols(); ++c) s += x(r, c) * x(r, c);
    const T rad = s + static_cast<T>(kRmsEps);
    const T inv = T(1) / std::sqrt(rad);
    const T inv3 = inv / rad;
    T dot = T(0);  // sum_k dy_k g_k x_k
    for (int c = 0; c < x.cols(); ++c) dot += dy(r, c) * gain[c] * x(r, c);
    for (int c = 0; c < x.cols(); ++c) {
      dx(r, c) += gain[c] * dy(r, c) * inv - x(r, c) * dot * inv3;
      dgain[c] += dy(r, c) * x(r, c) * inv;
    }
  }
}

// Elementwise product.
template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) fail(Errc::shape_mismatch, "hadamard " + a.shape_str(b));
  Matrix<T> c(a.rows(), a.cols());
  for (std::int64_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
  return c;
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Matrix<T> silu(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (std::int64_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] * sigmoid(x.data()[i]);
  return y;
}

template <typename T>
Matrix<T> silu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  if (!x.same_shape(dy)) fail(Errc::shape_mismatch, "silu_backward " + x.shape_str(dy));
  Matrix<T> dx(x.rows(), x.cols());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const T v = x.data()[i];
    const T s = sigmoid(v);
    dx.data()[i] = dy.data()[i] * (s + v * s * (T(1) - s));
  }
  return dx;
}

template <typename T>
Matrix<T> embedding_gather(const Matrix<T>& table, const std::vector<int>& ids) {
  Matrix<T> out(static_cast<int>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      fail(Errc::token_out_of_range, "id " + std::to_string(ids[i]));
    for (int c = 0; c < table.cols(); ++c) out(static_cast<int>(i), c) = table(ids[i], c);
  }
  return out;
}

template <typename T>
void embedding_scatter_add(Matrix<T>& dtable, const std::vector<int>& ids, const Matrix<T>& dout) {
  if (dout.rows() != static_cast<int>(ids.size()) || dout.cols() != dtable.cols())
    fail(Errc::shape_mismatch, "embedding_scatter_add " + dout.shape_str());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int c = 0; c < dtable.cols(); ++c)
      dtable(ids[i], c) += dout(static_cast<int>(i), c);
}

// Mean cross-entropy over rows whose target is >= 0 (rows with target -1 are
// skipped). Returns the loss in nats and the full softmax matrix for backward.
template <typename T>
struct CrossEntropyOut {
  T loss;
  Matrix<T> probs;
  int scored;
};

template <typename T>
CrossEntropyOut<T> cross_entropy(const Matrix<T>& logits, const std::vector<int>& targets) {
  if (logits.rows() != static_cast<int>(targets.size()))
    fail(Errc::shape_mismatch, "cross_entropy rows " + std::to_string(logits.rows()) +
                                   " vs targets " + std::to_string(targets.size()));
  CrossEntropyOut<T> out{T(0), softmax_rows(logits), 0};
  T sum = T(0);
  for (int r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= logits.cols()) fail(Errc::token_out_of_range, "target " + std::to_string(t));
    sum += -std::log(out.probs(r, t));
    ++out.scored;
  }
  if (out.scored == 0) fail(Errc::empty_split, "cross_entropy: no scored rows");
  out.loss = sum / static_cast<T>(out.scored);
  return out;
}

// dlogits for the mean loss above, scaled by dloss.
template <typename T>
Matrix<T> cross_entropy_backward(const CrossEntropyOut<T>& ce, const std::vector<int>& targets,
                                 T dloss = T(1)) {
  Matrix<T> dlogits(ce.probs.rows(), ce.probs.cols());
  const T inv = dloss / static_cast<T>(ce.scored);
  for (int r = 0; r < dlogits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    for (int c = 0; c < dlogits.cols(); ++c) dlogits(r, c) = ce.probs(r, c) * inv;
    dlogits(r, t) -= inv;
  }
  return dlogits;
}

}  // namespace prunelab
