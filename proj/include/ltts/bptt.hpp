#pragma once

#include <span>
#include <vector>

#include "ltts/losses.hpp"
#include "ltts/network.hpp"

namespace ltts {

template <class T>
struct SegmentResult {
  WeightsT<T> grads;
  double loss = 0.0;        // summed over every frame slot in the segment
  std::size_t bundles = 0;  // network steps consumed
};

namespace detail {

// Recurrent gradient carries between adjacent steps, one slot per layer.
// For Lstmp: dr is the gradient flowing into r_t from step t+1's gates,
// dc the gradient into c_t from c_{t+1}. For RecurrentLinear: dy is the
// accumulated output gradient of step t+1.
template <class T>
struct BackCarry {
  std::vector<std::vector<T>> dr, dc, dy;

  explicit BackCarry(const NetworkSpec& spec) {
    dr.resize(spec.layers.size());
    dc.resize(spec.layers.size());
    dy.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const LayerSpec& l = spec.layers[i];
      if (l.kind == LayerKind::Lstmp) {
        dr[i].assign(rec_dim(l), T(0));
        dc[i].assign(l.units, T(0));
      } else if (l.kind == LayerKind::RecurrentLinear) {
        dy[i].assign(l.units, T(0));
      }
    }
  }
};

// Backward through one recorded step. `dtop` is dL/d(output of top layer) at
// this step; returns nothing but accumulates into grads and updates carry.
template <class T>
void backward_step(const NetworkSpec& spec, const WeightsT<T>& w,
                   const StepTrace<T>& trace, std::vector<T> dtop,
                   WeightsT<T>& grads, BackCarry<T>& carry) {
  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const LayerSpec& l = spec.layers[li];
    const LayerWeightsT<T>& lw = w.layers[li];
    LayerWeightsT<T>& gw = grads.layers[li];
    switch (l.kind) {
      case LayerKind::FeedForward: {
        const FfTrace<T>& tr = trace.layers[li].ff;
        std::vector<T> dpre = std::move(dtop);
        if (l.act == Activation::Relu) {
          for (std::size_t k = 0; k < dpre.size(); ++k)
            if (tr.pre[k] <= T(0)) dpre[k] = T(0);
        }
        outer_acc<T>(gw.w, dpre, tr.x);
        add_in_place<T>(gw.b.v, dpre);
        std::vector<T> dx(tr.x.size(), T(0));
        matvec_t_acc<T>(dx, lw.w, dpre);
        dtop = std::move(dx);
        break;
      }
      case LayerKind::RecurrentLinear: {
        const RlTrace<T>& tr = trace.layers[li].rl;
        // dy_total = loss gradient here + R^T (next step's dy_total)
        std::vector<T> dy = std::move(dtop);
        matvec_t_acc<T>(dy, lw.r, carry.dy[li]);
        outer_acc<T>(gw.w, dy, tr.x);
        outer_acc<T>(gw.r, dy, tr.y_prev);
        add_in_place<T>(gw.b.v, dy);
        std::vector<T> dx(tr.x.size(), T(0));
        matvec_t_acc<T>(dx, lw.w, dy);
        carry.dy[li] = std::move(dy);
        dtop = std::move(dx);
        break;
      }
      case LayerKind::Lstmp: {
        const LstmpTrace<T>& tr = trace.layers[li].ls;
        const std::size_t n = l.units;
        std::vector<T> dr_total = std::move(dtop);
        add_in_place<T>(dr_total, carry.dr[li]);

        std::vector<T> dh;
        if (l.projection > 0) {
          outer_acc<T>(gw.p, dr_total, tr.h);
          dh.assign(n, T(0));
          matvec_t_acc<T>(dh, lw.p, dr_total);
        } else {
          dh = std::move(dr_total);
        }

        std::vector<T> dgates(4 * n);
        std::vector<T>& dc_next = carry.dc[li];
        for (std::size_t k = 0; k < n; ++k) {
          const T do_ = dh[k] * tr.hc[k];
          const T dhc = dh[k] * tr.o[k];
          const T dc = dhc * (T(1) - tr.hc[k] * tr.hc[k]) + dc_next[k];
          const T di = dc * tr.g[k];
          const T df = dc * tr.c_prev[k];
          const T dg = dc * tr.i[k];
          dgates[k] = di * tr.i[k] * (T(1) - tr.i[k]);
          dgates[n + k] = df * tr.f[k] * (T(1) - tr.f[k]);
          dgates[2 * n + k] = dg * (T(1) - tr.g[k] * tr.g[k]);
          dgates[3 * n + k] = do_ * tr.o[k] * (T(1) - tr.o[k]);
          dc_next[k] = dc * tr.f[k];  // carry into step t-1
        }

        outer_acc<T>(gw.w, dgates, tr.x);
        outer_acc<T>(gw.r, dgates, tr.r_prev);
        add_in_place<T>(gw.b.v, dgates);

        std::fill(carry.dr[li].begin(), carry.dr[li].end(), T(0));
        matvec_t_acc<T>(carry.dr[li], lw.r, dgates);

        std::vector<T> dx(tr.x.size(), T(0));
        matvec_t_acc<T>(dx, lw.w, dgates);
        dtop = std::move(dx);
        break;
      }
    }
  }
}

}  // namespace detail

// Exact gradients of the summed per-frame loss over bundle rows
// [begin, end) of (inputs, targets). The recurrent state carried in through
// `carry` is treated as constant (gradient flow is truncated at the segment
// boundary); on return `carry` holds the state after row end-1, ready for the
// next segment.
template <class T>
SegmentResult<T> bptt_gradients(const NetworkSpec& spec, const WeightsT<T>& w,
                                const Mat<T>& inputs, const Mat<T>& targets,
                                std::size_t begin, std::size_t end,
                                StreamStateT<T>& carry, const LossConfig& loss) {
  if (end > inputs.rows || begin > end) throw ConfigError("bptt_gradients: bad segment");
  if (inputs.rows != targets.rows) throw ShapeError("bptt_gradients: row mismatch");
  if (targets.cols != spec.output_dim())
    throw ShapeError("bptt_gradients: target width != network output");

  SegmentResult<T> out;
  out.grads = zero_weights<T>(spec);
  out.bundles = end - begin;
  if (begin == end) return out;

  const std::size_t d = spec.frame_dim;
  const std::size_t steps = end - begin;
  std::vector<StepTrace<T>> tapes(steps);
  std::vector<std::vector<T>> dy(steps);

  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = begin + s;
    const std::vector<T> y =
        detail::forward_step_impl<T>(spec, w, carry, inputs.row(t), &tapes[s]);
    dy[s].resize(y.size());
    // The loss applies per frame: block structure addresses the d values of
    // each of the K frames in the bundle independently.
    for (std::size_t k = 0; k < spec.bundle_size; ++k) {
      std::span<const T> zk = targets.row(t).subspan(k * d, d);
      std::span<const T> fk = std::span<const T>(y).subspan(k * d, d);
      out.loss += loss_value<T>(loss, zk, fk);
      const std::vector<T> g = loss_gradient<T>(loss, zk, fk);
      std::copy(g.begin(), g.end(), dy[s].begin() + static_cast<std::ptrdiff_t>(k * d));
    }
    if (!std::isfinite(out.loss))
      throw NumericError("bptt_gradients: non-finite loss at step " + std::to_string(t));
  }

  detail::BackCarry<T> back(spec);
  for (std::size_t s = steps; s-- > 0;)
    detail::backward_step<T>(spec, w, tapes[s], std::move(dy[s]), out.grads, back);
  return out;
}

}  // namespace ltts
