#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ltts/bptt.hpp"
#include "ltts/losses.hpp"
#include "ltts/network.hpp"
#include "ltts/normalize.hpp"
#include "ltts/rng.hpp"

namespace ltts {

// One aligned utterance: per-frame inputs and targets plus the phoneme
// alignment and per-frame silence flags.
struct UtteranceData {
  std::string id;
  MatF linguistic;                        // frames x input_dim
  MatF acoustic;                          // frames x d
  std::vector<std::uint32_t> phoneme_durations;  // frames per phoneme
  std::vector<std::uint8_t> silence_mask;        // 1 = silent frame

  std::size_t frames() const { return linguistic.rows; }
  std::size_t phonemes() const { return phoneme_durations.size(); }

  void validate() const {
    if (acoustic.rows != linguistic.rows)
      throw ShapeError("utterance " + id + ": input/target frame counts differ");
    if (silence_mask.size() != linguistic.rows)
      throw ShapeError("utterance " + id + ": silence mask length mismatch");
    std::uint64_t total = 0;
    for (std::uint32_t d : phoneme_durations) total += d;
    if (total != linguistic.rows)
      throw ShapeError("utterance " + id + ": durations sum to " + std::to_string(total) +
                       " but utterance has " + std::to_string(linguistic.rows) + " frames");
  }
};

// A sequence of K-frame bundles ready for training: one network step per row.
// pad(b, k) marks slots filled by repeating an edge frame rather than by a
// real frame; padded slots still carry valid (copied) feature values.
struct BundledSequence {
  std::string utt_id;
  std::size_t offset = 0;
  MatF inputs;             // bundles x input_dim (features of each bundle's last real frame)
  MatF targets;            // bundles x (K * d)
  Mat<std::uint8_t> pad;   // bundles x K

  std::size_t bundles() const { return inputs.rows; }
  std::size_t frame_slots() const { return pad.size(); }
};

// Drops 1 - keep_fraction of the silent frames (seeded uniform choice of
// exactly round(keep_fraction * n_silent) survivors), keeps every non-silent
// frame, preserves temporal order, and shrinks phoneme durations to match.
inline UtteranceData remove_silence(const UtteranceData& u, double keep_fraction,
                                    std::uint64_t seed) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0))
    throw ConfigError("remove_silence: keep_fraction must be in [0, 1]");
  u.validate();

  std::vector<std::size_t> silent;
  for (std::size_t t = 0; t < u.frames(); ++t)
    if (u.silence_mask[t]) silent.push_back(t);

  const std::size_t n_keep =
      static_cast<std::size_t>(std::lround(keep_fraction * static_cast<double>(silent.size())));
  Rng rng(seed);
  std::shuffle(silent.begin(), silent.end(), rng);
  silent.resize(n_keep);

  std::vector<std::uint8_t> keep(u.frames(), 1);
  for (std::size_t t = 0; t < u.frames(); ++t)
    if (u.silence_mask[t]) keep[t] = 0;
  for (std::size_t t : silent) keep[t] = 1;

  UtteranceData out;
  out.id = u.id;
  std::size_t kept = 0;
  for (std::uint8_t k : keep) kept += k;
  out.linguistic = MatF(kept, u.linguistic.cols);
  out.acoustic = MatF(kept, u.acoustic.cols);
  out.silence_mask.reserve(kept);
  out.phoneme_durations.assign(u.phonemes(), 0);

  std::size_t w = 0, phon = 0, within = 0;
  for (std::size_t t = 0; t < u.frames(); ++t) {
    while (phon < u.phonemes() && within == u.phoneme_durations[phon]) {
      ++phon;
      within = 0;
    }
    if (keep[t]) {
      std::copy(u.linguistic.row(t).begin(), u.linguistic.row(t).end(),
                out.linguistic.row(w).begin());
      std::copy(u.acoustic.row(t).begin(), u.acoustic.row(t).end(),
                out.acoustic.row(w).begin());
      out.silence_mask.push_back(u.silence_mask[t]);
      ++out.phoneme_durations[phon];
      ++w;
    }
    ++within;
  }
  return out;
}

// Groups T frames into K-frame bundles aligned so that real frames start at
// `offset` within the first full bundle: the leading partial bundle is padded
// at the front with copies of frame 0, the trailing one at the back with
// copies of frame T-1. Each bundle's input is the linguistic vector of its
// last real frame.
inline BundledSequence bundle_at_offset(const MatF& linguistic, const MatF& acoustic,
                                        std::size_t k, std::size_t offset,
                                        const std::string& utt_id = {}) {
  if (k == 0) throw ConfigError("bundle_at_offset: bundle size must be >= 1");
  if (offset >= k) throw ConfigError("bundle_at_offset: offset must be < bundle size");
  if (linguistic.rows != acoustic.rows)
    throw ShapeError("bundle_at_offset: input/target frame counts differ");
  const std::size_t t_total = linguistic.rows;
  if (t_total == 0) throw ConfigError("bundle_at_offset: empty utterance");

  const std::size_t front = offset == 0 ? 0 : k - offset;
  const std::size_t nb = (front + t_total + k - 1) / k;
  const std::size_t d = acoustic.cols;

  BundledSequence s;
  s.utt_id = utt_id;
  s.offset = offset;
  s.inputs = MatF(nb, linguistic.cols);
  s.targets = MatF(nb, k * d);
  s.pad = Mat<std::uint8_t>(nb, k);

  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t slot = 0; slot < k; ++slot) {
      const std::ptrdiff_t real =
          static_cast<std::ptrdiff_t>(b * k + slot) - static_cast<std::ptrdiff_t>(front);
      const std::size_t src =
          real < 0 ? 0
                   : std::min<std::size_t>(static_cast<std::size_t>(real), t_total - 1);
      s.pad(b, slot) = (real < 0 || static_cast<std::size_t>(real) >= t_total) ? 1 : 0;
      std::copy(acoustic.row(src).begin(), acoustic.row(src).end(),
                s.targets.row(b).begin() + static_cast<std::ptrdiff_t>(slot * d));
    }
    const std::ptrdiff_t last_real =
        static_cast<std::ptrdiff_t>(b * k + k - 1) - static_cast<std::ptrdiff_t>(front);
    const std::size_t src =
        last_real < 0 ? 0
                      : std::min<std::size_t>(static_cast<std::size_t>(last_real), t_total - 1);
    std::copy(linguistic.row(src).begin(), linguistic.row(src).end(), s.inputs.row(b).begin());
  }
  return s;
}

// All K bundle alignments of one utterance (offsets 0..K-1). Every original
// frame appears as a non-padded target in exactly one bundle per offset,
// hence exactly K times across the returned sequences.
inline std::vector<BundledSequence> augment_offsets(const UtteranceData& u, std::size_t k) {
  if (k == 0) throw ConfigError("augment_offsets: bundle size must be >= 1");
  std::vector<BundledSequence> out;
  out.reserve(k);
  for (std::size_t o = 0; o < k; ++o)
    out.push_back(bundle_at_offset(u.linguistic, u.acoustic, k, o, u.id));
  return out;
}

struct TrainConfig {
  double learning_rate = 1e-5;
  double decay = 0.9999;          // per-update exponential learning-rate decay
  std::size_t bptt_horizon = 20;  // bundles per gradient-truncation segment
  std::size_t batch_size = 4;     // sequences per update
  LossConfig loss;
  std::size_t bundle_size = 1;
  bool augment = true;            // train on all K offset alignments
  double silence_keep_fraction = 0.2;
  std::size_t max_steps = 2000;
  std::size_t eval_interval = 200;       // updates between dev evaluations
  std::size_t convergence_window = 5;    // dev evaluations compared for convergence
  double convergence_threshold = 1e-3;   // relative dev-loss improvement below this stops
  std::uint64_t seed = 1;
  double init_range = 0.08;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (!(decay > 0 && decay <= 1)) throw ConfigError("TrainConfig: decay must be in (0, 1]");
    if (bundle_size == 0) throw ConfigError("TrainConfig: bundle size must be >= 1");
    if (bptt_horizon == 0) throw ConfigError("TrainConfig: bptt_horizon must be >= 1");
    if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (!(silence_keep_fraction >= 0 && silence_keep_fraction <= 1))
      throw ConfigError("TrainConfig: silence_keep_fraction must be in [0, 1]");
  }
};

// Published defaults: acoustic 1e-5 (K=1) or 2.5e-6 (bundled), duration 1e-6;
// with the contaminated loss both models train at 5e-6.
inline double default_learning_rate(bool duration_model, std::size_t k, LossKind loss) {
  if (loss == LossKind::Contaminated) return 5e-6;
  if (duration_model) return 1e-6;
  return k > 1 ? 2.5e-6 : 1e-5;
}

struct TrainLogEntry {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean per frame slot since the previous record
  double dev_loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Weights weights;
  std::vector<TrainLogEntry> log;
  bool converged = false;
  std::size_t steps = 0;
};

// Mean per-frame-slot loss of the model over full sequences (state reset per
// sequence, no gradient truncation involved).
inline double evaluate_loss(const NetworkSpec& spec, const Weights& w,
                            const std::vector<BundledSequence>& seqs,
                            const LossConfig& loss) {
  double total = 0.0;
  std::size_t slots = 0;
  const std::size_t d = spec.frame_dim;
  for (const BundledSequence& s : seqs) {
    StreamState st = StreamState::zero(spec);
    for (std::size_t b = 0; b < s.bundles(); ++b) {
      const std::vector<float> y = forward_step<float>(spec, w, st, s.inputs.row(b));
      for (std::size_t kk = 0; kk < spec.bundle_size; ++kk) {
        total += loss_value<float>(loss, s.targets.row(b).subspan(kk * d, d),
                                   std::span<const float>(y).subspan(kk * d, d));
        ++slots;
      }
    }
  }
  return slots == 0 ? 0.0 : total / static_cast<double>(slots);
}

namespace detail {

template <class T>
void axpy_weights(WeightsT<T>& y, T alpha, const WeightsT<T>& x) {
  for (std::size_t i = 0; i < y.layers.size(); ++i) {
    if (!y.layers[i].w.empty()) axpy<T>(y.layers[i].w.v, alpha, x.layers[i].w.v);
    if (!y.layers[i].r.empty()) axpy<T>(y.layers[i].r.v, alpha, x.layers[i].r.v);
    if (!y.layers[i].p.empty()) axpy<T>(y.layers[i].p.v, alpha, x.layers[i].p.v);
    if (!y.layers[i].b.empty()) axpy<T>(y.layers[i].b.v, alpha, x.layers[i].b.v);
  }
}

}  // namespace detail

// Deterministic single-threaded SGD with truncated BPTT. One update consumes
// batch_size sequences (full length, segmented every bptt_horizon bundles with
// recurrent state carried across segments); the summed gradient is normalized
// by the number of frame slots in the batch and applied with learning rate
// lr0 * decay^step. Dev loss is evaluated every eval_interval updates;
// training stops at max_steps or once the relative dev-loss improvement
// across convergence_window evaluations falls below convergence_threshold.
inline TrainResult train(const NetworkSpec& spec,
                         const std::vector<BundledSequence>& train_seqs,
                         const std::vector<BundledSequence>& dev_seqs,
                         const TrainConfig& cfg) {
  cfg.validate();
  cfg.loss.validate(spec.frame_dim);
  if (train_seqs.empty()) throw ConfigError("train: empty training set");
  if (spec.bundle_size != cfg.bundle_size)
    throw ConfigError("train: config bundle size does not match network");
  for (const BundledSequence& s : train_seqs)
    if (s.targets.cols != spec.output_dim() || s.inputs.cols != spec.input_dim)
      throw ShapeError("train: sequence " + s.utt_id + " does not match network dims");

  const auto t0 = std::chrono::steady_clock::now();
  const auto wall_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  Rng init_rng(derive_seed(cfg.seed, 1));
  Rng order_rng(derive_seed(cfg.seed, 2));
  TrainResult res;
  res.weights = random_weights<float>(spec, init_rng, static_cast<float>(cfg.init_range));

  std::vector<std::size_t> order(train_seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  std::vector<double> dev_history;
  double acc_loss = 0.0;
  std::size_t acc_slots = 0;

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    Weights grads = zero_weights<float>(spec);
    double batch_loss = 0.0;
    std::size_t batch_slots = 0;

    for (std::size_t bi = 0; bi < cfg.batch_size; ++bi) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const BundledSequence& s = train_seqs[order[cursor++]];
      StreamState st = StreamState::zero(spec);
      for (std::size_t begin = 0; begin < s.bundles(); begin += cfg.bptt_horizon) {
        const std::size_t end = std::min(s.bundles(), begin + cfg.bptt_horizon);
        SegmentResult<float> seg = bptt_gradients<float>(spec, res.weights, s.inputs,
                                                         s.targets, begin, end, st, cfg.loss);
        detail::axpy_weights<float>(grads, 1.0f, seg.grads);
        batch_loss += seg.loss;
      }
      batch_slots += s.frame_slots();
    }

    if (!std::isfinite(batch_loss))
      throw NumericError("train: loss diverged at step " + std::to_string(step));

    const double lr = cfg.learning_rate * std::pow(cfg.decay, static_cast<double>(step));
    detail::axpy_weights<float>(
        res.weights, static_cast<float>(-lr / static_cast<double>(batch_slots)), grads);
    res.steps = step + 1;
    acc_loss += batch_loss;
    acc_slots += batch_slots;

    const bool last = step + 1 == cfg.max_steps;
    if ((step + 1) % cfg.eval_interval == 0 || last) {
      TrainLogEntry e;
      e.step = step + 1;
      e.train_loss = acc_slots ? acc_loss / static_cast<double>(acc_slots) : 0.0;
      e.dev_loss = evaluate_loss(spec, res.weights, dev_seqs, cfg.loss);
      e.lr = lr;
      e.wall_ms = wall_ms();
      res.log.push_back(e);
      acc_loss = 0.0;
      acc_slots = 0;
      if (!std::isfinite(e.dev_loss))
        throw NumericError("train: dev loss diverged at step " + std::to_string(step));

      dev_history.push_back(e.dev_loss);
      if (dev_history.size() > cfg.convergence_window) {
        const double before = dev_history[dev_history.size() - 1 - cfg.convergence_window];
        const double now = dev_history.back();
        const double rel = (before - now) / std::max(std::abs(before), 1e-12);
        if (rel < cfg.convergence_threshold) {
          res.converged = true;
          break;
        }
      }
    }
  }
  return res;
}

// ---- corpus -> training-data assembly ----

struct PreparedData {
  std::vector<BundledSequence> train;
  std::vector<BundledSequence> dev;
  ModelNorms norms;
};

namespace detail {

inline std::vector<std::size_t> phoneme_starts(const UtteranceData& u) {
  std::vector<std::size_t> starts(u.phonemes());
  std::size_t acc = 0;
  for (std::size_t p = 0; p < u.phonemes(); ++p) {
    starts[p] = acc;
    acc += u.phoneme_durations[p];
  }
  return starts;
}

inline bool silent_phoneme(const UtteranceData& u, std::size_t start, std::size_t dur) {
  for (std::size_t t = start; t < start + dur; ++t)
    if (!u.silence_mask[t]) return false;
  return dur > 0;
}

}  // namespace detail

// Per-phoneme input features for the duration model: the first frame of each
// phoneme with the trailing position features stripped. Column count =
// linguistic dim - position_dims.
inline MatF phoneme_features(const UtteranceData& u, std::size_t position_dims) {
  if (u.linguistic.cols <= position_dims)
    throw ConfigError("phoneme_features: no feature columns left after stripping positions");
  const std::size_t cols = u.linguistic.cols - position_dims;
  MatF out(u.phonemes(), cols);
  const std::vector<std::size_t> starts = detail::phoneme_starts(u);
  for (std::size_t p = 0; p < u.phonemes(); ++p)
    std::copy_n(u.linguistic.row(starts[p]).begin(), cols, out.row(p).begin());
  return out;
}

// Builds normalized bundled sequences for the acoustic model. Silence
// removal applies to the training utterances only; normalizers are fitted on
// the processed training data and applied to both splits. Dev sequences
// always cover all K offsets so the dev metric sees every bundle alignment.
inline PreparedData prepare_acoustic(const std::vector<UtteranceData>& utts,
                                     const std::vector<std::size_t>& train_idx,
                                     const std::vector<std::size_t>& dev_idx,
                                     std::size_t k, bool augment,
                                     double silence_keep_fraction, std::uint64_t seed) {
  PreparedData out;

  std::vector<UtteranceData> train_utts;
  train_utts.reserve(train_idx.size());
  for (std::size_t i : train_idx) {
    utts[i].validate();
    train_utts.push_back(
        remove_silence(utts[i], silence_keep_fraction, derive_seed(seed, 0x5110 + i)));
  }

  std::vector<const MatF*> lin_mats, ac_mats;
  for (const UtteranceData& u : train_utts) {
    if (u.frames() == 0) continue;
    lin_mats.push_back(&u.linguistic);
    ac_mats.push_back(&u.acoustic);
  }
  if (lin_mats.empty()) throw ConfigError("prepare_acoustic: no training frames");
  out.norms.input = Normalizer::fit(lin_mats);
  out.norms.output = Normalizer::fit(ac_mats);

  for (UtteranceData& u : train_utts) {
    if (u.frames() == 0) continue;
    out.norms.input.apply_rows(u.linguistic);
    out.norms.output.apply_rows(u.acoustic);
    if (augment) {
      for (BundledSequence& s : augment_offsets(u, k)) out.train.push_back(std::move(s));
    } else {
      out.train.push_back(bundle_at_offset(u.linguistic, u.acoustic, k, 0, u.id));
    }
  }

  for (std::size_t i : dev_idx) {
    utts[i].validate();
    UtteranceData u = utts[i];
    if (u.frames() == 0) continue;
    out.norms.input.apply_rows(u.linguistic);
    out.norms.output.apply_rows(u.acoustic);
    for (BundledSequence& s : augment_offsets(u, k)) out.dev.push_back(std::move(s));
  }
  return out;
}

// Builds normalized per-phoneme sequences for the duration model. Leading
// and trailing silent phonemes are dropped from every sequence, so edge
// silence never contributes duration targets. K is always 1 here.
inline PreparedData prepare_duration(const std::vector<UtteranceData>& utts,
                                     const std::vector<std::size_t>& train_idx,
                                     const std::vector<std::size_t>& dev_idx,
                                     std::size_t position_dims) {
  PreparedData out;

  struct Seq {
    std::string id;
    MatF feats;
    MatF durs;
  };
  const auto build = [&](const UtteranceData& u) -> Seq {
    u.validate();
    const std::vector<std::size_t> starts = detail::phoneme_starts(u);
    std::size_t first = 0, last = u.phonemes();
    while (first < last &&
           detail::silent_phoneme(u, starts[first], u.phoneme_durations[first]))
      ++first;
    while (last > first &&
           detail::silent_phoneme(u, starts[last - 1], u.phoneme_durations[last - 1]))
      --last;
    Seq s;
    s.id = u.id;
    if (first == last) return s;
    const MatF all = phoneme_features(u, position_dims);
    s.feats = MatF(last - first, all.cols);
    s.durs = MatF(last - first, 1);
    for (std::size_t p = first; p < last; ++p) {
      std::copy(all.row(p).begin(), all.row(p).end(), s.feats.row(p - first).begin());
      s.durs(p - first, 0) = static_cast<float>(u.phoneme_durations[p]);
    }
    return s;
  };

  std::vector<Seq> train_seqs, dev_seqs;
  for (std::size_t i : train_idx) train_seqs.push_back(build(utts[i]));
  for (std::size_t i : dev_idx) dev_seqs.push_back(build(utts[i]));

  std::vector<const MatF*> f_mats, d_mats;
  for (const Seq& s : train_seqs) {
    if (s.feats.rows == 0) continue;
    f_mats.push_back(&s.feats);
    d_mats.push_back(&s.durs);
  }
  if (f_mats.empty()) throw ConfigError("prepare_duration: no training phonemes");
  out.norms.input = Normalizer::fit(f_mats);
  out.norms.output = Normalizer::fit(d_mats);

  const auto emit = [&](std::vector<Seq>& seqs, std::vector<BundledSequence>& dst) {
    for (Seq& s : seqs) {
      if (s.feats.rows == 0) continue;
      out.norms.input.apply_rows(s.feats);
      out.norms.output.apply_rows(s.durs);
      dst.push_back(bundle_at_offset(s.feats, s.durs, 1, 0, s.id));
    }
  };
  emit(train_seqs, out.train);
  emit(dev_seqs, out.dev);
  return out;
}

}  // namespace ltts
