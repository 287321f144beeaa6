#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ltts/trainer.hpp"
#include "oracles.hpp"

using namespace ltts;

namespace {

// Marker utterance: linguistic(t, 0) = t so survivorship and ordering are
// observable after any rearrangement; acoustic(t, 0) = t likewise.
UtteranceData marker_utt(std::size_t frames, std::size_t in_dim, std::size_t d,
                         std::vector<std::uint32_t> durs,
                         std::vector<std::uint8_t> silence = {}) {
  UtteranceData u;
  u.id = "marker";
  u.linguistic = MatF(frames, in_dim);
  u.acoustic = MatF(frames, d);
  for (std::size_t t = 0; t < frames; ++t) {
    u.linguistic(t, 0) = static_cast<float>(t);
    for (std::size_t j = 1; j < in_dim; ++j)
      u.linguistic(t, j) = static_cast<float>(j) + 0.25f * static_cast<float>(t);
    u.acoustic(t, 0) = static_cast<float>(t);
    for (std::size_t j = 1; j < d; ++j) u.acoustic(t, j) = -static_cast<float>(t);
  }
  u.phoneme_durations = std::move(durs);
  u.silence_mask = silence.empty() ? std::vector<std::uint8_t>(frames, 0) : std::move(silence);
  u.validate();
  return u;
}

NetworkSpec lstm_rl_spec(std::size_t in, std::size_t d, std::size_t k,
                         std::size_t cells, std::size_t proj) {
  NetworkSpec s;
  s.input_dim = in;
  s.frame_dim = d;
  s.bundle_size = k;
  s.layers.push_back({LayerKind::Lstmp, cells, proj, Activation::Linear});
  s.layers.push_back({LayerKind::RecurrentLinear, d * k, 0, Activation::Linear});
  s.validate();
  return s;
}

MatF random_mat(std::size_t r, std::size_t c, std::uint64_t seed, float range = 1.0f) {
  MatF m(r, c);
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-range, range);
  for (float& v : m.v) v = static_cast<float>(dist(rng));
  return m;
}

Mat<double> random_mat_d(std::size_t r, std::size_t c, Rng& rng, double range = 1.0) {
  Mat<double> m(r, c);
  std::uniform_real_distribution<double> dist(-range, range);
  for (double& v : m.v) v = dist(rng);
  return m;
}

double segment_loss(const NetworkSpec& spec, const WeightsT<double>& w,
                    const Mat<double>& in, const Mat<double>& tg, std::size_t b0,
                    std::size_t b1, const StreamStateT<double>& state_in,
                    const LossConfig& loss) {
  StreamStateT<double> st = state_in;
  return bptt_gradients<double>(spec, w, in, tg, b0, b1, st, loss).loss;
}

double max_weight_diff(const WeightsT<double>& a, const WeightsT<double>& b) {
  double worst = 0.0;
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    const auto probe = [&](const Mat<double>& x, const Mat<double>& y) {
      for (std::size_t i = 0; i < x.v.size(); ++i)
        worst = std::max(worst, std::abs(x.v[i] - y.v[i]));
    };
    probe(a.layers[li].w, b.layers[li].w);
    probe(a.layers[li].r, b.layers[li].r);
    probe(a.layers[li].p, b.layers[li].p);
    probe(a.layers[li].b, b.layers[li].b);
  }
  return worst;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("remove_silence keeps everything at fraction one") {
  UtteranceData u = marker_utt(10, 3, 2, {4, 6}, {1, 1, 0, 0, 0, 0, 0, 0, 1, 1});
  UtteranceData out = remove_silence(u, 1.0, 5);
  CHECK(out.frames() == 10);
  CHECK(out.linguistic.v == u.linguistic.v);
  CHECK(out.acoustic.v == u.acoustic.v);
  CHECK(out.phoneme_durations == u.phoneme_durations);
}

TEST_CASE("remove_silence retains the exact rounded count of silent frames") {
  // 100 silent + 50 voiced frames; keeping 20% leaves exactly 20 silent ones.
  std::vector<std::uint8_t> mask(150, 0);
  for (std::size_t t = 0; t < 100; ++t) mask[t] = 1;
  UtteranceData u = marker_utt(150, 2, 1, {50, 50, 50}, mask);

  UtteranceData out = remove_silence(u, 0.2, 17);
  CHECK(out.frames() == 70);
  std::size_t silent = 0;
  for (std::uint8_t s : out.silence_mask) silent += s;
  CHECK(silent == 20);
  out.validate();

  // Temporal order is preserved: the frame markers stay strictly increasing,
  // and every voiced frame (markers 100..149) survives.
  for (std::size_t t = 1; t < out.frames(); ++t)
    CHECK(out.linguistic(t, 0) > out.linguistic(t - 1, 0));
  std::size_t voiced = 0;
  for (std::size_t t = 0; t < out.frames(); ++t)
    if (out.linguistic(t, 0) >= 100.0f) ++voiced;
  CHECK(voiced == 50);

  UtteranceData none = remove_silence(u, 0.0, 17);
  CHECK(none.frames() == 50);
}

TEST_CASE("remove_silence leaves all-voiced utterances unchanged") {
  UtteranceData u = marker_utt(12, 2, 1, {5, 7});
  for (double frac : {0.0, 0.3, 1.0}) {
    UtteranceData out = remove_silence(u, frac, 9);
    CHECK(out.linguistic.v == u.linguistic.v);
    CHECK(out.phoneme_durations == u.phoneme_durations);
  }
}

TEST_CASE("remove_silence is deterministic in the seed") {
  std::vector<std::uint8_t> mask(40, 0);
  for (std::size_t t = 0; t < 20; ++t) mask[t] = 1;
  UtteranceData u = marker_utt(40, 2, 1, {20, 20}, mask);
  UtteranceData a = remove_silence(u, 0.5, 123);
  UtteranceData b = remove_silence(u, 0.5, 123);
  UtteranceData c = remove_silence(u, 0.5, 124);
  CHECK(a.linguistic.v == b.linguistic.v);
  CHECK(a.linguistic.v != c.linguistic.v);
}

TEST_CASE("remove_silence rejects fractions outside [0, 1]") {
  UtteranceData u = marker_utt(4, 2, 1, {4});
  CHECK_THROWS_AS(remove_silence(u, -0.1, 1), ConfigError);
  CHECK_THROWS_AS(remove_silence(u, 1.1, 1), ConfigError);
}

TEST_CASE("bundling at offset zero groups frames in order") {
  UtteranceData u = marker_utt(4, 3, 2, {4});
  BundledSequence s = bundle_at_offset(u.linguistic, u.acoustic, 2, 0, u.id);
  REQUIRE(s.bundles() == 2);
  CHECK(s.frame_slots() == 4);
  // Bundle 0 = frames {0,1}, bundle 1 = frames {2,3}; no padding anywhere.
  CHECK(s.targets(0, 0) == 0.0f);
  CHECK(s.targets(0, 2) == 1.0f);
  CHECK(s.targets(1, 0) == 2.0f);
  CHECK(s.targets(1, 2) == 3.0f);
  for (std::uint8_t p : s.pad.v) CHECK(p == 0);
  // Inputs come from each bundle's last real frame.
  CHECK(s.inputs(0, 0) == 1.0f);
  CHECK(s.inputs(1, 0) == 3.0f);
}

TEST_CASE("bundling at a nonzero offset pads the edges with copies") {
  UtteranceData u = marker_utt(4, 3, 2, {4});
  BundledSequence s = bundle_at_offset(u.linguistic, u.acoustic, 2, 1, u.id);
  REQUIRE(s.bundles() == 3);

  // {pad, y1}, {y2, y3}, {y4, pad}: pads copy the adjacent edge frame.
  CHECK(s.pad(0, 0) == 1);
  CHECK(s.pad(0, 1) == 0);
  CHECK(s.pad(1, 0) == 0);
  CHECK(s.pad(1, 1) == 0);
  CHECK(s.pad(2, 0) == 0);
  CHECK(s.pad(2, 1) == 1);

  CHECK(s.targets(0, 0) == 0.0f);  // copy of frame 0
  CHECK(s.targets(0, 2) == 0.0f);  // frame 0 itself
  CHECK(s.targets(1, 0) == 1.0f);
  CHECK(s.targets(1, 2) == 2.0f);
  CHECK(s.targets(2, 0) == 3.0f);
  CHECK(s.targets(2, 2) == 3.0f);  // copy of frame 3

  // Last real frame of each bundle drives the input: frames 0, 2, 3.
  CHECK(s.inputs(0, 0) == 0.0f);
  CHECK(s.inputs(1, 0) == 2.0f);
  CHECK(s.inputs(2, 0) == 3.0f);
}

TEST_CASE("bundle size one is the identity grouping") {
  UtteranceData u = marker_utt(7, 3, 2, {7});
  BundledSequence s = bundle_at_offset(u.linguistic, u.acoustic, 1, 0, u.id);
  CHECK(s.inputs.v == u.linguistic.v);
  CHECK(s.targets.v == u.acoustic.v);
  for (std::uint8_t p : s.pad.v) CHECK(p == 0);

  std::vector<BundledSequence> seqs = augment_offsets(u, 1);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].inputs.v == u.linguistic.v);
}

TEST_CASE("bundle counts across offsets match the closed form") {
  const std::size_t k = 4;
  for (std::size_t t_total = 1; t_total <= 13; ++t_total) {
    UtteranceData u = marker_utt(t_total, 2, 1, {static_cast<std::uint32_t>(t_total)});
    std::vector<BundledSequence> seqs = augment_offsets(u, k);
    REQUIRE(seqs.size() == k);
    std::size_t got = 0;
    for (const BundledSequence& s : seqs) got += s.bundles();
    std::size_t want = 0;
    for (std::size_t o = 0; o < k; ++o) want += (t_total + o + k - 1) / k;
    CHECK(got == want);
  }
}

TEST_CASE("every frame is a real target exactly once per offset") {
  for (std::size_t k : {2u, 4u}) {
    const std::size_t t_total = 11;
    UtteranceData u = marker_utt(t_total, 2, 1, {11});
    std::vector<BundledSequence> seqs = augment_offsets(u, k);
    std::vector<std::size_t> overall(t_total, 0);
    for (const BundledSequence& s : seqs) {
      std::vector<std::size_t> here(t_total, 0);
      for (std::size_t b = 0; b < s.bundles(); ++b) {
        for (std::size_t slot = 0; slot < k; ++slot) {
          if (s.pad(b, slot)) continue;
          const auto frame = static_cast<std::size_t>(s.targets(b, slot));
          REQUIRE(frame < t_total);
          ++here[frame];
        }
      }
      for (std::size_t c : here) CHECK(c == 1);
      for (std::size_t t = 0; t < t_total; ++t) overall[t] += here[t];
    }
    for (std::size_t c : overall) CHECK(c == k);
  }
}

TEST_CASE("bundling argument validation") {
  UtteranceData u = marker_utt(4, 3, 2, {4});
  CHECK_THROWS_AS(bundle_at_offset(u.linguistic, u.acoustic, 0, 0), ConfigError);
  CHECK_THROWS_AS(bundle_at_offset(u.linguistic, u.acoustic, 2, 2), ConfigError);
  CHECK_THROWS_AS(augment_offsets(u, 0), ConfigError);
  MatF empty(0, 3);
  MatF empty_ac(0, 2);
  CHECK_THROWS_AS(bundle_at_offset(empty, empty_ac, 2, 0), ConfigError);
  MatF short_ac(3, 2);
  CHECK_THROWS_AS(bundle_at_offset(u.linguistic, short_ac, 2, 0), ShapeError);
}

TEST_CASE("normalization: fit produces zero-mean unit-variance, round-trips") {
  MatF data = random_mat(64, 5, 77, 3.0f);
  for (std::size_t t = 0; t < data.rows; ++t) data(t, 2) = 42.0f;  // constant column
  Normalizer n = Normalizer::fit({&data});

  MatF normed = data;
  n.apply_rows(normed);
  for (std::size_t j = 0; j < 5; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t t = 0; t < normed.rows; ++t) mean += normed(t, j);
    mean /= normed.rows;
    for (std::size_t t = 0; t < normed.rows; ++t) {
      const double c = normed(t, j) - mean;
      var += c * c;
    }
    var /= normed.rows;
    CHECK(std::abs(mean) <= 1e-4);
    if (j == 2) {
      CHECK(var == 0.0);  // constant column maps to exactly zero
    } else {
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
  }

  n.unapply_rows(normed);
  for (std::size_t i = 0; i < data.v.size(); ++i)
    CHECK(std::abs(normed.v[i] - data.v[i]) <= 1e-6f * std::max(1.0f, std::abs(data.v[i])));
}

TEST_CASE("phoneme_features picks the first frame of each phoneme") {
  UtteranceData u = marker_utt(6, 5, 1, {2, 3, 1});
  MatF f = phoneme_features(u, 2);
  REQUIRE(f.rows == 3);
  REQUIRE(f.cols == 3);
  const std::size_t starts[] = {0, 2, 5};
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(f(p, j) == u.linguistic(starts[p], j));
  CHECK_THROWS_AS(phoneme_features(u, 5), ConfigError);
}

TEST_CASE("duration data trims edge silence but keeps interior silence") {
  // Phonemes: sil(2) A(3) sil(2) B(2) sil(1). Only the edges are trimmed.
  std::vector<std::uint8_t> mask = {1, 1, 0, 0, 0, 1, 1, 0, 0, 1};
  UtteranceData u = marker_utt(10, 3, 1, {2, 3, 2, 2, 1}, mask);
  PreparedData prep = prepare_duration({u}, {0}, {0}, 0);
  REQUIRE(prep.train.size() == 1);
  CHECK(prep.train[0].bundles() == 3);
  CHECK(prep.dev[0].bundles() == 3);

  // An utterance that is silence throughout contributes nothing.
  std::vector<std::uint8_t> all_sil(4, 1);
  UtteranceData s = marker_utt(4, 3, 1, {2, 2}, all_sil);
  CHECK_THROWS_AS(prepare_duration({s}, {0}, {}, 0), ConfigError);
}

TEST_CASE("prepare_acoustic: augmentation fan-out and normalization") {
  std::vector<UtteranceData> utts;
  utts.push_back(marker_utt(6, 3, 2, {6}));
  utts.push_back(marker_utt(7, 3, 2, {7}));
  utts.push_back(marker_utt(5, 3, 2, {5}));
  utts[0].id = "a";
  utts[1].id = "b";
  utts[2].id = "c";

  PreparedData aug = prepare_acoustic(utts, {0, 1}, {2}, 2, true, 1.0, 7);
  CHECK(aug.train.size() == 4);  // 2 utterances x 2 offsets
  CHECK(aug.dev.size() == 2);    // dev always covers every offset

  PreparedData plain = prepare_acoustic(utts, {0, 1}, {2}, 2, false, 1.0, 7);
  CHECK(plain.train.size() == 2);
  CHECK(plain.dev.size() == 2);
  for (const BundledSequence& s : plain.train) CHECK(s.offset == 0);

  // With K=1 the bundled inputs are exactly the normalized features: fitted
  // on the training split, so per-column mean 0 / variance 1 over it.
  PreparedData k1 = prepare_acoustic(utts, {0, 1}, {2}, 1, false, 1.0, 7);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    std::size_t n = 0;
    for (const BundledSequence& s : k1.train)
      for (std::size_t b = 0; b < s.bundles(); ++b) {
        mean += s.inputs(b, j);
        ++n;
      }
    mean /= static_cast<double>(n);
    for (const BundledSequence& s : k1.train)
      for (std::size_t b = 0; b < s.bundles(); ++b) {
        const double c = s.inputs(b, j) - mean;
        var += c * c;
      }
    var /= static_cast<double>(n);
    CHECK(std::abs(mean) <= 1e-4);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("evaluate_loss averages the per-slot squared loss") {
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.frame_dim = 1;
  spec.bundle_size = 1;
  spec.layers.push_back({LayerKind::RecurrentLinear, 1, 0, Activation::Linear});
  spec.validate();
  Weights w = zero_weights<float>(spec);
  w.layers[0].b(0, 0) = 0.5f;

  MatF lin(2, 1, {0.0f, 0.0f});
  MatF ac(2, 1, {1.0f, 2.0f});
  BundledSequence s = bundle_at_offset(lin, ac, 1, 0, "e");
  const double got = evaluate_loss(spec, w, {s}, LossConfig::squared(1));
  // Constant prediction 0.5 against targets 1 and 2: (0.125 + 1.125) / 2.
  CHECK(got == doctest::Approx(0.625).epsilon(1e-6));
}

TEST_CASE("zero-length BPTT segment yields zero gradients") {
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 3, 0);
  Rng rng(5);
  Mat<double> in = random_mat_d(4, 2, rng);
  Mat<double> tg = random_mat_d(4, 1, rng);
  WeightsT<double> w = weights_cast<double>(random_weights<float>(spec, rng, 0.4f));
  StreamStateT<double> st = StreamStateT<double>::zero(spec);
  SegmentResult<double> seg =
      bptt_gradients<double>(spec, w, in, tg, 2, 2, st, LossConfig::squared(1));
  CHECK(seg.loss == 0.0);
  CHECK(seg.bundles == 0);
  visit_tensors(seg.grads, [](const Mat<double>& m) {
    for (double v : m.v) CHECK(v == 0.0);
  });
}

TEST_CASE("single-cell network gradients match finite differences") {
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.frame_dim = 1;
  spec.bundle_size = 1;
  spec.layers.push_back({LayerKind::Lstmp, 1, 0, Activation::Linear});
  spec.validate();

  Rng rng(41);
  WeightsT<double> w = weights_cast<double>(random_weights<float>(spec, rng, 0.5f));
  Mat<double> in = random_mat_d(2, 1, rng);
  Mat<double> tg = random_mat_d(2, 1, rng);
  const LossConfig loss = LossConfig::squared(1);

  StreamStateT<double> st = StreamStateT<double>::zero(spec);
  SegmentResult<double> seg = bptt_gradients<double>(spec, w, in, tg, 0, 2, st, loss);
  const double err = oracle::max_bptt_fd_error(
      spec, w, seg.grads,
      [&] {
        return segment_loss(spec, w, in, tg, 0, 2, StreamStateT<double>::zero(spec), loss);
      });
  CHECK(err <= 1e-4);
}

TEST_CASE("horizon one sums per-step gradients and drops cross-step terms") {
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 2, 0);
  Rng rng(43);
  WeightsT<double> w = weights_cast<double>(random_weights<float>(spec, rng, 0.5f));
  Mat<double> in = random_mat_d(3, 2, rng);
  Mat<double> tg = random_mat_d(3, 1, rng);
  const LossConfig loss = LossConfig::squared(1);

  // Horizon 1: three single-bundle segments with the recurrent state carried
  // across but gradients cut at each boundary. Capture the state entering each
  // segment so finite differences can treat it as a constant.
  WeightsT<double> truncated = zero_weights<double>(spec);
  std::vector<StreamStateT<double>> entry;
  {
    StreamStateT<double> st = StreamStateT<double>::zero(spec);
    for (std::size_t t = 0; t < 3; ++t) {
      entry.push_back(st);
      SegmentResult<double> seg = bptt_gradients<double>(spec, w, in, tg, t, t + 1, st, loss);
      for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        add_in_place<double>(truncated.layers[li].w.v, seg.grads.layers[li].w.v);
        add_in_place<double>(truncated.layers[li].r.v, seg.grads.layers[li].r.v);
        if (!truncated.layers[li].p.empty())
          add_in_place<double>(truncated.layers[li].p.v, seg.grads.layers[li].p.v);
        add_in_place<double>(truncated.layers[li].b.v, seg.grads.layers[li].b.v);
      }
    }
  }

  const double err = oracle::max_bptt_fd_error(spec, w, truncated, [&] {
    double acc = 0.0;
    for (std::size_t t = 0; t < 3; ++t) acc += segment_loss(spec, w, in, tg, t, t + 1, entry[t], loss);
    return acc;
  });
  CHECK(err <= 1e-4);

  // Full-horizon gradients include the cross-step terms and must differ.
  StreamStateT<double> st = StreamStateT<double>::zero(spec);
  SegmentResult<double> full = bptt_gradients<double>(spec, w, in, tg, 0, 3, st, loss);
  CHECK(max_weight_diff(truncated, full.grads) > 1e-6);
}

TEST_CASE("full-horizon gradients match finite differences on toy networks") {
  struct Case {
    NetworkSpec spec;
    LossConfig loss;
    std::size_t bundles;
  };
  std::vector<Case> cases;

  {  // relu front end + projected cell + recurrent output
    NetworkSpec s;
    s.input_dim = 3;
    s.frame_dim = 2;
    s.bundle_size = 1;
    s.layers.push_back({LayerKind::FeedForward, 3, 0, Activation::Relu});
    s.layers.push_back({LayerKind::Lstmp, 4, 2, Activation::Linear});
    s.layers.push_back({LayerKind::RecurrentLinear, 2, 0, Activation::Linear});
    s.validate();
    cases.push_back({s, LossConfig::squared(2), 4});
  }
  {  // duration-style: unprojected cell + linear feed-forward head
    NetworkSpec s;
    s.input_dim = 2;
    s.frame_dim = 1;
    s.bundle_size = 1;
    s.layers.push_back({LayerKind::Lstmp, 3, 0, Activation::Linear});
    s.layers.push_back({LayerKind::FeedForward, 1, 0, Activation::Linear});
    s.validate();
    cases.push_back({s, LossConfig::squared(1), 3});
  }
  {  // bundled output, contaminated loss with two blocks
    NetworkSpec s;
    s.input_dim = 2;
    s.frame_dim = 2;
    s.bundle_size = 2;
    s.layers.push_back({LayerKind::FeedForward, 2, 0, Activation::Relu});
    s.layers.push_back({LayerKind::Lstmp, 3, 0, Activation::Linear});
    s.layers.push_back({LayerKind::RecurrentLinear, 4, 0, Activation::Linear});
    s.validate();
    cases.push_back({s, LossConfig::contaminated(2, 0.2, 5.0, {{0, 1}, {1, 2}}), 3});
  }
  {  // projected cell as the output layer, non-uniform variances
    NetworkSpec s;
    s.input_dim = 2;
    s.frame_dim = 2;
    s.bundle_size = 1;
    s.layers.push_back({LayerKind::Lstmp, 4, 2, Activation::Linear});
    s.validate();
    LossConfig loss = LossConfig::contaminated(2, 0.1, 10.0);
    loss.sigma = {0.5, 2.0};
    cases.push_back({s, loss, 5});
  }

  std::size_t case_id = 0;
  for (const Case& c : cases) {
    CAPTURE(case_id);
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
      Rng rng(derive_seed(7100 + case_id, seed));
      WeightsT<double> w = weights_cast<double>(random_weights<float>(c.spec, rng, 0.4f));
      Mat<double> in = random_mat_d(c.bundles, c.spec.input_dim, rng);
      Mat<double> tg = random_mat_d(c.bundles, c.spec.output_dim(), rng);

      StreamStateT<double> st = StreamStateT<double>::zero(c.spec);
      SegmentResult<double> seg =
          bptt_gradients<double>(c.spec, w, in, tg, 0, c.bundles, st, c.loss);
      const double err = oracle::max_bptt_fd_error(
          c.spec, w, seg.grads,
          [&] {
            return segment_loss(c.spec, w, in, tg, 0, c.bundles,
                                StreamStateT<double>::zero(c.spec), c.loss);
          });
      CHECK(err <= 1e-3);
    }
    ++case_id;
  }
}

TEST_CASE("gradients flow across segment boundaries through the carried state") {
  // Carrying state in must change the second segment's gradients relative to
  // starting it cold: the forward values differ, so the loss surface does.
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 3, 0);
  Rng rng(59);
  WeightsT<double> w = weights_cast<double>(random_weights<float>(spec, rng, 0.6f));
  Mat<double> in = random_mat_d(4, 2, rng);
  Mat<double> tg = random_mat_d(4, 1, rng);
  const LossConfig loss = LossConfig::squared(1);

  StreamStateT<double> st = StreamStateT<double>::zero(spec);
  bptt_gradients<double>(spec, w, in, tg, 0, 2, st, loss);
  StreamStateT<double> carried = st;
  SegmentResult<double> warm = bptt_gradients<double>(spec, w, in, tg, 2, 4, st, loss);

  StreamStateT<double> cold = StreamStateT<double>::zero(spec);
  SegmentResult<double> coldseg = bptt_gradients<double>(spec, w, in, tg, 2, 4, cold, loss);
  CHECK(max_weight_diff(warm.grads, coldseg.grads) > 1e-9);

  // And the warm-start gradients are exact for the truncated objective.
  const double err = oracle::max_bptt_fd_error(spec, w, warm.grads, [&] {
    return segment_loss(spec, w, in, tg, 2, 4, carried, loss);
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("bptt rejects malformed segments and mismatched shapes") {
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 2, 0);
  Rng rng(61);
  WeightsT<double> w = weights_cast<double>(random_weights<float>(spec, rng, 0.4f));
  Mat<double> in = random_mat_d(3, 2, rng);
  Mat<double> tg = random_mat_d(3, 1, rng);
  StreamStateT<double> st = StreamStateT<double>::zero(spec);
  CHECK_THROWS_AS(
      bptt_gradients<double>(spec, w, in, tg, 2, 1, st, LossConfig::squared(1)),
      ConfigError);
  CHECK_THROWS_AS(
      bptt_gradients<double>(spec, w, in, tg, 0, 4, st, LossConfig::squared(1)),
      ConfigError);
  Mat<double> bad_tg = random_mat_d(3, 2, rng);
  CHECK_THROWS_AS(
      bptt_gradients<double>(spec, w, in, bad_tg, 0, 3, st, LossConfig::squared(1)),
      ShapeError);
}

TEST_CASE("default learning rates follow the published table") {
  CHECK(default_learning_rate(false, 1, LossKind::Squared) == 1e-5);
  CHECK(default_learning_rate(false, 4, LossKind::Squared) == 2.5e-6);
  CHECK(default_learning_rate(true, 1, LossKind::Squared) == 1e-6);
  CHECK(default_learning_rate(true, 1, LossKind::Contaminated) == 5e-6);
  CHECK(default_learning_rate(false, 4, LossKind::Contaminated) == 5e-6);
}

TEST_CASE("training is deterministic given a seed") {
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 3, 0);
  std::vector<BundledSequence> seqs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    MatF lin = random_mat(6, 2, 100 + s);
    MatF ac = random_mat(6, 1, 200 + s);
    seqs.push_back(bundle_at_offset(lin, ac, 1, 0, "u" + std::to_string(s)));
  }
  TrainConfig cfg;
  cfg.loss = LossConfig::squared(1);
  cfg.learning_rate = 1e-3;
  cfg.max_steps = 20;
  cfg.eval_interval = 5;
  cfg.batch_size = 2;
  cfg.seed = 7;

  TrainResult a = train(spec, seqs, seqs, cfg);
  TrainResult b = train(spec, seqs, seqs, cfg);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].step == b.log[i].step);
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].dev_loss == b.log[i].dev_loss);
    CHECK(a.log[i].lr == b.log[i].lr);
  }
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    CHECK(a.weights.layers[li].w.v == b.weights.layers[li].w.v);
    CHECK(a.weights.layers[li].r.v == b.weights.layers[li].r.v);
    CHECK(a.weights.layers[li].b.v == b.weights.layers[li].b.v);
  }

  TrainConfig other = cfg;
  other.seed = 8;
  TrainResult c = train(spec, seqs, seqs, other);
  CHECK(a.weights.layers[0].w.v != c.weights.layers[0].w.v);
}

TEST_CASE("squared and zero-epsilon contaminated losses train identically") {
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 3, 0);
  MatF lin = random_mat(8, 2, 31);
  MatF ac = random_mat(8, 1, 32);
  std::vector<BundledSequence> seqs{bundle_at_offset(lin, ac, 1, 0, "u")};

  TrainConfig sq;
  sq.loss = LossConfig::squared(1);
  sq.learning_rate = 1e-3;
  sq.max_steps = 30;
  sq.eval_interval = 10;
  sq.batch_size = 1;
  sq.seed = 9;
  TrainConfig mix = sq;
  mix.loss = LossConfig::contaminated(1, 0.0, 10.0);

  TrainResult a = train(spec, seqs, seqs, sq);
  TrainResult b = train(spec, seqs, seqs, mix);
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    CHECK(a.weights.layers[li].w.v == b.weights.layers[li].w.v);
    CHECK(a.weights.layers[li].r.v == b.weights.layers[li].r.v);
    CHECK(a.weights.layers[li].b.v == b.weights.layers[li].b.v);
  }
  // The logged losses differ exactly by the Gaussian normalizing constant.
  constexpr double kHalfLog2Pi = 0.9189385332046727;
  for (std::size_t i = 0; i < a.log.size(); ++i)
    CHECK(b.log[i].dev_loss - a.log[i].dev_loss ==
          doctest::Approx(kHalfLog2Pi).epsilon(1e-6));
}

TEST_CASE("training overfits a single memorizable sequence") {
  // Teacher-student: targets generated by a same-shaped network are exactly
  // representable, so SGD should drive the loss toward zero.
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 4, 0);
  Rng trng(75);
  Weights teacher = random_weights<float>(spec, trng, 0.5f);
  MatF lin = random_mat(15, 2, 72);
  StreamState st = StreamState::zero(spec);
  MatF ac = forward_sequence<float>(spec, teacher, st, lin);
  std::vector<BundledSequence> seqs{bundle_at_offset(lin, ac, 1, 0, "t")};

  TrainConfig cfg;
  cfg.loss = LossConfig::squared(1);
  cfg.learning_rate = 0.1;
  cfg.decay = 1.0;
  cfg.batch_size = 1;
  cfg.bptt_horizon = 50;
  cfg.max_steps = 4000;
  cfg.eval_interval = 100;
  cfg.convergence_window = 100;  // no early stop; run the whole budget
  cfg.convergence_threshold = 1e-5;
  cfg.seed = 4;

  Rng init(derive_seed(cfg.seed, 1));
  Weights w0 = random_weights<float>(spec, init, static_cast<float>(cfg.init_range));
  const double initial = evaluate_loss(spec, w0, seqs, cfg.loss);

  TrainResult res = train(spec, seqs, seqs, cfg);
  const double final_loss = evaluate_loss(spec, res.weights, seqs, cfg.loss);
  CHECK(final_loss < 0.01 * initial);
}

TEST_CASE("training rejects bad configurations") {
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 2, 0);
  TrainConfig cfg;
  cfg.loss = LossConfig::squared(1);
  CHECK_THROWS_AS(train(spec, {}, {}, cfg), ConfigError);

  MatF lin = random_mat(4, 2, 1);
  MatF ac = random_mat(4, 1, 2);
  std::vector<BundledSequence> seqs{bundle_at_offset(lin, ac, 1, 0, "u")};
  TrainConfig mismatched = cfg;
  mismatched.bundle_size = 2;
  CHECK_THROWS_AS(train(spec, seqs, seqs, mismatched), ConfigError);

  MatF wide = random_mat(4, 3, 3);
  std::vector<BundledSequence> bad{bundle_at_offset(wide, ac, 1, 0, "w")};
  CHECK_THROWS_AS(train(spec, bad, bad, cfg), ShapeError);

  TrainConfig zero_lr = cfg;
  zero_lr.learning_rate = 0.0;
  CHECK_THROWS_AS(train(spec, seqs, seqs, zero_lr), ConfigError);
}

TEST_CASE("a runaway learning rate aborts with a numeric error") {
  NetworkSpec spec = lstm_rl_spec(2, 1, 1, 3, 0);
  MatF lin = random_mat(8, 2, 51);
  MatF ac = random_mat(8, 1, 52);
  std::vector<BundledSequence> seqs{bundle_at_offset(lin, ac, 1, 0, "u")};
  TrainConfig cfg;
  cfg.loss = LossConfig::squared(1);
  cfg.learning_rate = 1e12;
  cfg.decay = 1.0;
  cfg.batch_size = 1;
  cfg.max_steps = 50;
  cfg.eval_interval = 50;
  cfg.seed = 2;
  CHECK_THROWS_AS(train(spec, seqs, seqs, cfg), NumericError);
}

}  // TEST_SUITE
