#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ltts/errors.hpp"

namespace ltts {

enum class LossKind {
  Squared,       // 0.5 * ||z - f||^2
  Contaminated,  // negative log of a two-component Gaussian mixture with shared mean
};

// Contiguous index range [begin, end) of the per-frame output vector.
struct Block {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Loss selector and hyperparameters. `blocks` partitions [0, dim); the
// contaminated loss is evaluated per block and summed. `sigma` holds
// per-dimension variances (empty means identity).
struct LossConfig {
  LossKind kind = LossKind::Squared;
  double epsilon = 0.1;
  double c = 10.0;
  std::vector<Block> blocks;
  std::vector<double> sigma;

  static LossConfig squared(std::size_t dim) {
    LossConfig cfg;
    cfg.kind = LossKind::Squared;
    cfg.blocks = {{0, dim}};
    return cfg;
  }

  static LossConfig contaminated(std::size_t dim, double epsilon = 0.1, double c = 10.0,
                                 std::vector<Block> blocks = {}) {
    LossConfig cfg;
    cfg.kind = LossKind::Contaminated;
    cfg.epsilon = epsilon;
    cfg.c = c;
    cfg.blocks = blocks.empty() ? std::vector<Block>{{0, dim}} : std::move(blocks);
    return cfg;
  }

  // The 49-value acoustic frame splits into spectrum+aperiodicity and
  // log-F0+voicing.
  static std::vector<Block> speech_blocks(std::size_t dim) {
    if (dim < 3) return {{0, dim}};
    return {{0, dim - 2}, {dim - 2, dim}};
  }

  std::size_t dim() const { return blocks.empty() ? 0 : blocks.back().end; }

  void validate(std::size_t expected_dim) const {
    if (kind == LossKind::Contaminated) {
      if (!(epsilon >= 0.0 && epsilon < 0.5))
        throw ConfigError("LossConfig: epsilon must be in [0, 0.5)");
      if (!(c > 1.0)) throw ConfigError("LossConfig: c must be > 1");
    }
    if (blocks.empty()) throw ConfigError("LossConfig: empty block partition");
    std::size_t pos = 0;
    for (const Block& b : blocks) {
      if (b.begin != pos || b.end <= b.begin)
        throw ConfigError("LossConfig: blocks must be an ordered partition of [0, dim)");
      pos = b.end;
    }
    if (pos != expected_dim)
      throw ConfigError("LossConfig: blocks cover " + std::to_string(pos) +
                        " dims, expected " + std::to_string(expected_dim));
    if (!sigma.empty()) {
      if (sigma.size() != expected_dim)
        throw ConfigError("LossConfig: sigma size mismatch");
      for (double s : sigma) {
        if (!(s > 0.0) || !std::isfinite(s))
          throw ConfigError("LossConfig: sigma entries must be positive and finite");
      }
    }
  }
};

namespace detail {

inline double sigma_var(const LossConfig& cfg, std::size_t j) {
  return cfg.sigma.empty() ? 1.0 : cfg.sigma[j];
}

template <class T>
void check_loss_args(const LossConfig& cfg, std::span<const T> z, std::span<const T> f) {
  if (z.size() != f.size() || z.size() != cfg.dim())
    throw ShapeError("loss: dimension mismatch");
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!std::isfinite(static_cast<double>(z[j])) ||
        !std::isfinite(static_cast<double>(f[j])))
      throw NumericError("loss: non-finite input");
  }
}

// Per-block pieces of the mixture posterior. q is the Mahalanobis form of the
// residual under the narrow component; log_norm the narrow log-density offset.
struct BlockStats {
  double q = 0.0;         // sum (z-f)^2 / sigma
  double log_narrow = 0;  // log[(1-eps) N(z; f, Sigma)]
  double log_wide = 0;    // log[eps N(z; f, c Sigma)], -inf when eps == 0
};

template <class T>
BlockStats block_stats(const LossConfig& cfg, const Block& b, std::span<const T> z,
                       std::span<const T> f) {
  BlockStats s;
  double log_det = 0.0;
  for (std::size_t j = b.begin; j < b.end; ++j) {
    const double r = static_cast<double>(z[j]) - static_cast<double>(f[j]);
    const double var = sigma_var(cfg, j);
    s.q += r * r / var;
    log_det += std::log(var);
  }
  const double d = static_cast<double>(b.size());
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const double base = -0.5 * d * log_2pi - 0.5 * log_det;
  s.log_narrow = std::log1p(-cfg.epsilon) + base - 0.5 * s.q;
  s.log_wide = (cfg.epsilon > 0.0 ? std::log(cfg.epsilon) : -INFINITY) + base -
               0.5 * d * std::log(cfg.c) - 0.5 * s.q / cfg.c;
  return s;
}

inline double log_sum_exp(double a, double b) {
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  if (lo == -INFINITY) return hi;
  return hi + std::log1p(std::exp(lo - hi));
}

// Posterior weight of the wide component given the block residual.
inline double wide_posterior(const BlockStats& s) {
  if (s.log_wide == -INFINITY) return 0.0;
  // 1 / (1 + exp(log_narrow - log_wide))
  const double delta = s.log_narrow - s.log_wide;
  if (delta > 700.0) return 0.0;
  if (delta < -700.0) return 1.0;
  return 1.0 / (1.0 + std::exp(delta));
}

}  // namespace detail

// Loss between target z and prediction f. The contaminated form is the
// negative log of (1-eps) N(z; f, Sigma) + eps N(z; f, c Sigma) per block,
// summed over blocks; evaluated via log-sum-exp of the component
// log-densities.
template <class T>
double loss_value(const LossConfig& cfg, std::span<const T> z, std::span<const T> f) {
  detail::check_loss_args(cfg, z, f);
  if (cfg.kind == LossKind::Squared) {
    double acc = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double r = static_cast<double>(z[j]) - static_cast<double>(f[j]);
      acc += r * r;
    }
    return 0.5 * acc;
  }
  double total = 0.0;
  for (const Block& b : cfg.blocks) {
    const detail::BlockStats s = detail::block_stats(cfg, b, z, f);
    total += -detail::log_sum_exp(s.log_narrow, s.log_wide);
  }
  return total;
}

// dL/df. For the contaminated loss the gradient is the residual scaled by the
// posterior-blended precision: (f_j - z_j) / sigma_j * (w_narrow + w_wide / c).
template <class T>
std::vector<T> loss_gradient(const LossConfig& cfg, std::span<const T> z,
                             std::span<const T> f) {
  detail::check_loss_args(cfg, z, f);
  std::vector<T> grad(z.size());
  if (cfg.kind == LossKind::Squared) {
    for (std::size_t j = 0; j < z.size(); ++j) grad[j] = f[j] - z[j];
    return grad;
  }
  for (const Block& b : cfg.blocks) {
    const detail::BlockStats s = detail::block_stats(cfg, b, z, f);
    const double w_wide = detail::wide_posterior(s);
    const double blend = (1.0 - w_wide) + w_wide / cfg.c;
    for (std::size_t j = b.begin; j < b.end; ++j) {
      const double r = static_cast<double>(f[j]) - static_cast<double>(z[j]);
      grad[j] = static_cast<T>(r / detail::sigma_var(cfg, j) * blend);
    }
  }
  return grad;
}

// Posterior probability that each block's residual came from the wide
// component. Nondecreasing in the block residual norm; identically 0 for
// eps = 0 and for the squared loss.
template <class T>
std::vector<double> responsibility(const LossConfig& cfg, std::span<const T> z,
                                   std::span<const T> f) {
  detail::check_loss_args(cfg, z, f);
  std::vector<double> out(cfg.blocks.size(), 0.0);
  if (cfg.kind == LossKind::Squared) return out;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i)
    out[i] = detail::wide_posterior(detail::block_stats(cfg, cfg.blocks[i], z, f));
  return out;
}

}  // namespace ltts
