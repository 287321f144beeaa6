#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ltts/errors.hpp"

namespace ltts {

// Dense row-major matrix. float is the deployment scalar; tests instantiate
// double to build reference oracles. Accumulation order in the kernels below
// is strictly sequential so that results are reproducible bit for bit.
template <class T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, T(0)) {}
  Mat(std::size_t r, std::size_t c, std::vector<T> data)
      : rows(r), cols(c), v(std::move(data)) {
    if (v.size() != rows * cols) throw ShapeError("Mat: data length != rows*cols");
  }

  T& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {v.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {v.data() + r * cols, cols}; }

  bool empty() const { return v.empty(); }
  std::size_t size() const { return v.size(); }

  bool finite() const {
    for (T x : v) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

template <class To, class From>
Mat<To> mat_cast(const Mat<From>& m) {
  Mat<To> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.v.size(); ++i) out.v[i] = static_cast<To>(m.v[i]);
  return out;
}

// y += m x
template <class T>
void matvec_acc(std::span<T> y, const Mat<T>& m, std::span<const T> x) {
  if (x.size() != m.cols || y.size() != m.rows)
    throw ShapeError("matvec_acc: dimension mismatch");
  const T* p = m.v.data();
  for (std::size_t r = 0; r < m.rows; ++r) {
    T acc = T(0);
    for (std::size_t c = 0; c < m.cols; ++c) acc += p[c] * x[c];
    y[r] += acc;
    p += m.cols;
  }
}

template <class T>
std::vector<T> matvec(const Mat<T>& m, std::span<const T> x) {
  std::vector<T> y(m.rows, T(0));
  matvec_acc<T>(y, m, x);
  return y;
}

// y += m^T x  (used by backpropagation)
template <class T>
void matvec_t_acc(std::span<T> y, const Mat<T>& m, std::span<const T> x) {
  if (x.size() != m.rows || y.size() != m.cols)
    throw ShapeError("matvec_t_acc: dimension mismatch");
  const T* p = m.v.data();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const T xr = x[r];
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += p[c] * xr;
    p += m.cols;
  }
}

// m += a b^T
template <class T>
void outer_acc(Mat<T>& m, std::span<const T> a, std::span<const T> b) {
  if (a.size() != m.rows || b.size() != m.cols)
    throw ShapeError("outer_acc: dimension mismatch");
  T* p = m.v.data();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const T ar = a[r];
    for (std::size_t c = 0; c < m.cols; ++c) p[c] += ar * b[c];
    p += m.cols;
  }
}

// y += alpha x
template <class T>
void axpy(std::span<T> y, T alpha, std::span<const T> x) {
  if (y.size() != x.size()) throw ShapeError("axpy: dimension mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

template <class T>
void add_in_place(std::span<T> y, std::span<const T> x) {
  axpy<T>(y, T(1), x);
}

}  // namespace ltts
