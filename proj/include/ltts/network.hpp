#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ltts/mat.hpp"
#include "ltts/rng.hpp"

namespace ltts {

enum class LayerKind : std::uint8_t {
  FeedForward = 0,      // y = act(W x + b)
  Lstmp = 1,            // gated cell, optionally with a linear recurrent projection
  RecurrentLinear = 2,  // y_t = W x_t + R y_{t-1} + b
};

enum class Activation : std::uint8_t {
  Linear = 0,
  Relu = 1,
};

struct LayerSpec {
  LayerKind kind = LayerKind::FeedForward;
  // FeedForward / RecurrentLinear: output width. Lstmp: number of cells.
  std::size_t units = 0;
  // Lstmp only: recurrent projection units; 0 means the recurrence runs on the
  // cell output directly (a vanilla LSTM layer).
  std::size_t projection = 0;
  Activation act = Activation::Linear;

  std::size_t output_dim() const {
    if (kind == LayerKind::Lstmp && projection > 0) return projection;
    return units;
  }
  bool recurrent() const { return kind != LayerKind::FeedForward; }
};

// Architecture description. The output layer is `bundle_size` frames wide:
// one network step predicts K consecutive frames of `frame_dim` values each.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> layers;
  std::size_t bundle_size = 1;  // K
  std::size_t frame_dim = 0;    // d, acoustic values per frame

  std::size_t output_dim() const { return bundle_size * frame_dim; }

  std::size_t layer_input_dim(std::size_t i) const {
    return i == 0 ? input_dim : layers[i - 1].output_dim();
  }

  void validate() const {
    if (bundle_size < 1) throw ConfigError("NetworkSpec: bundle_size must be >= 1");
    if (layers.empty()) return;  // header-only specs are allowed on disk
    if (input_dim == 0) throw ConfigError("NetworkSpec: input_dim must be > 0");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      if (l.units == 0)
        throw ConfigError("NetworkSpec: layer " + std::to_string(i) + " has zero units");
      if (l.kind != LayerKind::Lstmp && l.projection != 0)
        throw ConfigError("NetworkSpec: projection only applies to LSTMP layers");
      if (layer_input_dim(i) == 0)
        throw ConfigError("NetworkSpec: layer " + std::to_string(i) + " has zero input dim");
    }
    if (layers.back().output_dim() != output_dim())
      throw ConfigError("NetworkSpec: output layer width " +
                        std::to_string(layers.back().output_dim()) +
                        " != bundle_size * frame_dim = " + std::to_string(output_dim()));
  }

  std::size_t parameter_count() const;

  // Acoustic network: ReLU layer, LSTMP stack, linear recurrent output.
  static NetworkSpec acoustic(std::size_t input_dim, std::size_t frame_dim,
                              std::size_t bundle_size, std::size_t ff_units = 128,
                              std::size_t lstmp_layers = 3, std::size_t cells = 128,
                              std::size_t projection = 64) {
    NetworkSpec s;
    s.input_dim = input_dim;
    s.frame_dim = frame_dim;
    s.bundle_size = bundle_size;
    s.layers.push_back({LayerKind::FeedForward, ff_units, 0, Activation::Relu});
    for (std::size_t i = 0; i < lstmp_layers; ++i)
      s.layers.push_back({LayerKind::Lstmp, cells, projection, Activation::Linear});
    s.layers.push_back(
        {LayerKind::RecurrentLinear, frame_dim * bundle_size, 0, Activation::Linear});
    s.validate();
    return s;
  }

  // Duration network: one unprojected LSTM layer, linear feed-forward output.
  static NetworkSpec duration(std::size_t input_dim, std::size_t cells = 64) {
    NetworkSpec s;
    s.input_dim = input_dim;
    s.frame_dim = 1;
    s.bundle_size = 1;
    s.layers.push_back({LayerKind::Lstmp, cells, 0, Activation::Linear});
    s.layers.push_back({LayerKind::FeedForward, 1, 0, Activation::Linear});
    s.validate();
    return s;
  }
};

// Weight tensors for one layer. Biases are stored as n x 1 matrices so every
// parameter lives in a Mat and serialization, SGD updates and gradient
// buffers can treat them uniformly.
//
// LSTMP gate rows are stacked in the order [input; forget; candidate; output],
// `units` rows per gate.
template <class T>
struct LayerWeightsT {
  Mat<T> w;  // FeedForward: units x in. Lstmp: 4*units x in. RecurrentLinear: units x in.
  Mat<T> r;  // Lstmp: 4*units x rec_dim. RecurrentLinear: units x units. Else empty.
  Mat<T> p;  // Lstmp with projection: projection x units. Else empty.
  Mat<T> b;  // FeedForward/RecurrentLinear: units x 1. Lstmp: 4*units x 1.
};

template <class T>
struct WeightsT {
  std::vector<LayerWeightsT<T>> layers;
};

using Weights = WeightsT<float>;

namespace detail {
inline std::size_t rec_dim(const LayerSpec& l) {
  return l.projection > 0 ? l.projection : l.units;
}
}  // namespace detail

// Calls fn(Mat<T>&) for every parameter tensor in canonical order
// (per layer: w, r, p, b; skipping tensors a layer does not have).
template <class T, class Fn>
void visit_tensors(WeightsT<T>& w, Fn&& fn) {
  for (auto& lw : w.layers) {
    if (!lw.w.empty()) fn(lw.w);
    if (!lw.r.empty()) fn(lw.r);
    if (!lw.p.empty()) fn(lw.p);
    if (!lw.b.empty()) fn(lw.b);
  }
}

template <class T, class Fn>
void visit_tensors(const WeightsT<T>& w, Fn&& fn) {
  for (const auto& lw : w.layers) {
    if (!lw.w.empty()) fn(lw.w);
    if (!lw.r.empty()) fn(lw.r);
    if (!lw.p.empty()) fn(lw.p);
    if (!lw.b.empty()) fn(lw.b);
  }
}

template <class T>
WeightsT<T> zero_weights(const NetworkSpec& spec) {
  WeightsT<T> w;
  w.layers.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::size_t in = spec.layer_input_dim(i);
    LayerWeightsT<T>& lw = w.layers[i];
    switch (l.kind) {
      case LayerKind::FeedForward:
        lw.w = Mat<T>(l.units, in);
        lw.b = Mat<T>(l.units, 1);
        break;
      case LayerKind::Lstmp:
        lw.w = Mat<T>(4 * l.units, in);
        lw.r = Mat<T>(4 * l.units, detail::rec_dim(l));
        if (l.projection > 0) lw.p = Mat<T>(l.projection, l.units);
        lw.b = Mat<T>(4 * l.units, 1);
        break;
      case LayerKind::RecurrentLinear:
        lw.w = Mat<T>(l.units, in);
        lw.r = Mat<T>(l.units, l.units);
        lw.b = Mat<T>(l.units, 1);
        break;
    }
  }
  return w;
}

template <class T>
WeightsT<T> random_weights(const NetworkSpec& spec, Rng& rng, T range) {
  WeightsT<T> w = zero_weights<T>(spec);
  std::uniform_real_distribution<double> dist(-static_cast<double>(range),
                                              static_cast<double>(range));
  visit_tensors(w, [&](Mat<T>& m) {
    for (T& x : m.v) x = static_cast<T>(dist(rng));
  });
  return w;
}

template <class To, class From>
WeightsT<To> weights_cast(const WeightsT<From>& w) {
  WeightsT<To> out;
  out.layers.reserve(w.layers.size());
  for (const auto& lw : w.layers)
    out.layers.push_back({mat_cast<To>(lw.w), mat_cast<To>(lw.r), mat_cast<To>(lw.p),
                          mat_cast<To>(lw.b)});
  return out;
}

inline std::size_t NetworkSpec::parameter_count() const {
  WeightsT<float> w = zero_weights<float>(*this);
  std::size_t n = 0;
  visit_tensors(w, [&](const MatF& m) { n += m.size(); });
  return n;
}

// Recurrent carry for one layer. Lstmp: c (cells) and r (rec_dim).
// RecurrentLinear: y_prev (units). FeedForward layers carry nothing.
template <class T>
struct LayerStateT {
  std::vector<T> c;
  std::vector<T> r;
  std::vector<T> y_prev;
};

template <class T>
struct StreamStateT {
  std::vector<LayerStateT<T>> layers;

  static StreamStateT zero(const NetworkSpec& spec) {
    StreamStateT st;
    st.layers.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const LayerSpec& l = spec.layers[i];
      if (l.kind == LayerKind::Lstmp) {
        st.layers[i].c.assign(l.units, T(0));
        st.layers[i].r.assign(detail::rec_dim(l), T(0));
      } else if (l.kind == LayerKind::RecurrentLinear) {
        st.layers[i].y_prev.assign(l.units, T(0));
      }
    }
    return st;
  }

  void reset() {
    for (auto& l : layers) {
      std::fill(l.c.begin(), l.c.end(), T(0));
      std::fill(l.r.begin(), l.r.end(), T(0));
      std::fill(l.y_prev.begin(), l.y_prev.end(), T(0));
    }
  }
};

using StreamState = StreamStateT<float>;

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Per-step activation record for backpropagation through time.
template <class T>
struct FfTrace {
  std::vector<T> x, pre;
};
template <class T>
struct LstmpTrace {
  std::vector<T> x, r_prev, c_prev, i, f, g, o, c, hc, h;
};
template <class T>
struct RlTrace {
  std::vector<T> x, y_prev;
};

template <class T>
struct LayerTrace {
  FfTrace<T> ff;
  LstmpTrace<T> ls;
  RlTrace<T> rl;
};

template <class T>
struct StepTrace {
  std::vector<LayerTrace<T>> layers;
};

namespace detail {

template <class T>
void check_finite(std::span<const T> v, std::size_t layer_index, const char* what) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string("non-finite ") + what + " in layer " +
                         std::to_string(layer_index));
  }
}

// One LSTMP step. Updates st.c and st.r, returns the new projected output.
template <class T>
std::vector<T> lstmp_step_impl(const LayerSpec& spec, const LayerWeightsT<T>& lw,
                               LayerStateT<T>& st, std::span<const T> x,
                               std::size_t layer_index, LstmpTrace<T>* trace) {
  const std::size_t n = spec.units;
  if (st.c.size() != n || st.r.size() != rec_dim(spec))
    throw ShapeError("lstmp_step: state size mismatch");

  // Gate preactivations, stacked [i; f; g; o].
  std::vector<T> pre(lw.b.v);
  matvec_acc<T>(pre, lw.w, x);
  matvec_acc<T>(pre, lw.r, st.r);

  std::vector<T> i(n), f(n), g(n), o(n), c(n), hc(n), h(n);
  for (std::size_t k = 0; k < n; ++k) {
    i[k] = sigmoid(pre[k]);
    f[k] = sigmoid(pre[n + k]);
    g[k] = std::tanh(pre[2 * n + k]);
    o[k] = sigmoid(pre[3 * n + k]);
    c[k] = f[k] * st.c[k] + i[k] * g[k];
    hc[k] = std::tanh(c[k]);
    h[k] = o[k] * hc[k];
  }

  std::vector<T> out;
  if (spec.projection > 0) {
    out = matvec<T>(lw.p, h);
  } else {
    out = h;
  }

  check_finite<T>(c, layer_index, "cell state");
  check_finite<T>(out, layer_index, "output");

  if (trace) {
    trace->x.assign(x.begin(), x.end());
    trace->r_prev = st.r;
    trace->c_prev = st.c;
    trace->i = i;
    trace->f = f;
    trace->g = g;
    trace->o = o;
    trace->c = c;
    trace->hc = hc;
    trace->h = h;
  }

  st.c = c;
  st.r = out;
  return out;
}

template <class T>
std::vector<T> forward_step_impl(const NetworkSpec& spec, const WeightsT<T>& w,
                                 StreamStateT<T>& state, std::span<const T> x,
                                 StepTrace<T>* trace) {
  if (x.size() != spec.input_dim) throw ShapeError("forward_step: input dim mismatch");
  if (w.layers.size() != spec.layers.size() || state.layers.size() != spec.layers.size())
    throw ShapeError("forward_step: weight/state layer count mismatch");
  if (trace) trace->layers.resize(spec.layers.size());

  std::vector<T> cur(x.begin(), x.end());
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    const LayerWeightsT<T>& lw = w.layers[li];
    switch (l.kind) {
      case LayerKind::FeedForward: {
        std::vector<T> pre(lw.b.v);
        matvec_acc<T>(pre, lw.w, cur);
        if (trace) {
          trace->layers[li].ff.x = cur;
          trace->layers[li].ff.pre = pre;
        }
        if (l.act == Activation::Relu)
          for (T& v : pre) v = v > T(0) ? v : T(0);
        cur = std::move(pre);
        break;
      }
      case LayerKind::Lstmp: {
        cur = lstmp_step_impl<T>(l, lw, state.layers[li], cur, li,
                                 trace ? &trace->layers[li].ls : nullptr);
        break;
      }
      case LayerKind::RecurrentLinear: {
        std::vector<T>& y_prev = state.layers[li].y_prev;
        if (y_prev.size() != l.units)
          throw ShapeError("forward_step: recurrent output state size mismatch");
        std::vector<T> y(lw.b.v);
        matvec_acc<T>(y, lw.w, cur);
        matvec_acc<T>(y, lw.r, y_prev);
        check_finite<T>(std::span<const T>(y), li, "output");
        if (trace) {
          trace->layers[li].rl.x = cur;
          trace->layers[li].rl.y_prev = y_prev;
        }
        y_prev = y;
        cur = std::move(y);
        break;
      }
    }
  }
  return cur;
}

}  // namespace detail

// One step of an LSTMP layer on its own. The recurrence runs on the projected
// output when a projection is configured, otherwise on the cell output.
template <class T>
std::vector<T> lstmp_step(const LayerSpec& spec, const LayerWeightsT<T>& lw,
                          LayerStateT<T>& st, std::span<const T> x,
                          std::size_t layer_index = 0) {
  return detail::lstmp_step_impl<T>(spec, lw, st, x, layer_index, nullptr);
}

// One network step: consumes one input vector, emits bundle_size * frame_dim
// outputs (K consecutive frames in temporal order).
template <class T>
std::vector<T> forward_step(const NetworkSpec& spec, const WeightsT<T>& w,
                            StreamStateT<T>& state, std::span<const T> x) {
  return detail::forward_step_impl<T>(spec, w, state, x, nullptr);
}

template <class T>
std::vector<T> forward_step_traced(const NetworkSpec& spec, const WeightsT<T>& w,
                                   StreamStateT<T>& state, std::span<const T> x,
                                   StepTrace<T>& trace) {
  return detail::forward_step_impl<T>(spec, w, state, x, &trace);
}

// Batched evaluation of a whole input sequence (one row per network step).
// Implemented as the streaming step in a loop, so it is bitwise identical to
// feeding the rows through forward_step one at a time.
template <class T>
Mat<T> forward_sequence(const NetworkSpec& spec, const WeightsT<T>& w,
                        StreamStateT<T>& state, const Mat<T>& inputs) {
  Mat<T> out(inputs.rows, spec.output_dim());
  for (std::size_t t = 0; t < inputs.rows; ++t) {
    std::vector<T> y = forward_step<T>(spec, w, state, inputs.row(t));
    std::copy(y.begin(), y.end(), out.row(t).begin());
  }
  return out;
}

}  // namespace ltts
