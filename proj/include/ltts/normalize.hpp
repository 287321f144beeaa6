#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ltts/mat.hpp"

namespace ltts {

// Per-dimension zero-mean unit-variance scaling. Stats are stored in float,
// the transform runs through double so apply followed by unapply returns the
// input to well under 1e-6.
struct Normalizer {
  std::vector<float> mean;
  std::vector<float> stdev;

  std::size_t dim() const { return mean.size(); }

  static Normalizer identity(std::size_t n) {
    Normalizer z;
    z.mean.assign(n, 0.0f);
    z.stdev.assign(n, 1.0f);
    return z;
  }

  // Column statistics over the rows of all given matrices. Standard
  // deviations are floored so the transform stays invertible.
  static Normalizer fit(const std::vector<const MatF*>& data, float floor = 1e-4f) {
    std::size_t cols = 0;
    for (const MatF* m : data)
      if (m && m->rows > 0) cols = m->cols;
    Normalizer z = identity(cols);
    if (cols == 0) return z;

    std::vector<double> sum(cols, 0.0), sq(cols, 0.0);
    std::size_t n = 0;
    for (const MatF* m : data) {
      if (!m) continue;
      if (m->rows > 0 && m->cols != cols) throw ShapeError("Normalizer::fit: column mismatch");
      for (std::size_t r = 0; r < m->rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double v = (*m)(r, c);
          sum[c] += v;
          sq[c] += v * v;
        }
      }
      n += m->rows;
    }
    if (n == 0) return z;
    for (std::size_t c = 0; c < cols; ++c) {
      const double mu = sum[c] / static_cast<double>(n);
      const double var = sq[c] / static_cast<double>(n) - mu * mu;
      const double sd = std::sqrt(var > 0.0 ? var : 0.0);
      z.mean[c] = static_cast<float>(mu);
      z.stdev[c] = static_cast<float>(sd > floor ? sd : floor);
    }
    return z;
  }

  void apply(std::span<float> x) const {
    if (x.size() != dim()) throw ShapeError("Normalizer::apply: dimension mismatch");
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = static_cast<float>((static_cast<double>(x[j]) - mean[j]) / stdev[j]);
  }

  void unapply(std::span<float> x) const {
    if (x.size() != dim()) throw ShapeError("Normalizer::unapply: dimension mismatch");
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = static_cast<float>(static_cast<double>(x[j]) * stdev[j] + mean[j]);
  }

  void apply_rows(MatF& m) const {
    for (std::size_t r = 0; r < m.rows; ++r) apply(m.row(r));
  }
  void unapply_rows(MatF& m) const {
    for (std::size_t r = 0; r < m.rows; ++r) unapply(m.row(r));
  }
};

// Input and output scalers that travel with a trained model.
struct ModelNorms {
  Normalizer input;
  Normalizer output;
};

}  // namespace ltts
