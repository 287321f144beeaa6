#include "ltts/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ltts/errors.hpp"
#include "ltts/rng.hpp"

namespace ltts {

void CorpusConfig::validate() const {
  if (utterances == 0) throw ConfigError("corpus: utterance count must be >= 1");
  if (inventory < 2) throw ConfigError("corpus: inventory must include silence + speech");
  if (min_phonemes == 0 || max_phonemes < min_phonemes)
    throw ConfigError("corpus: bad phoneme count range");
  if (min_duration == 0 || max_duration < min_duration)
    throw ConfigError("corpus: bad duration range");
  if (!(smoothness >= 0.0 && smoothness < 1.0))
    throw ConfigError("corpus: smoothness must be in [0, 1)");
  for (double rate : {outlier_rate, silence_rate}) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("corpus: rates must be in [0, 1]");
  }
  if (noise_level < 0.0) throw ConfigError("corpus: noise_level must be >= 0");
  if (frame_dim == 0) throw ConfigError("corpus: frame_dim must be >= 1");
}

namespace {

constexpr std::size_t kSilenceId = 0;

struct TargetMap {
  // Per output dimension: y = amp * sin(freq * <e, v> + sweep * pos + phase)
  //                           + slope * <e, v2>
  std::vector<float> amp, freq, sweep, phase, slope;
  MatF v, v2;  // frame_dim x embedding_dims

  static TargetMap make(const CorpusConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    TargetMap tm;
    const std::size_t d = cfg.frame_dim;
    tm.amp.resize(d);
    tm.freq.resize(d);
    tm.sweep.resize(d);
    tm.phase.resize(d);
    tm.slope.resize(d);
    tm.v = MatF(d, cfg.embedding_dims);
    tm.v2 = MatF(d, cfg.embedding_dims);
    for (std::size_t j = 0; j < d; ++j) {
      tm.amp[j] = static_cast<float>(0.5 + u01(rng));
      tm.freq[j] = static_cast<float>(0.5 + 1.5 * u01(rng));
      tm.sweep[j] = static_cast<float>(3.0 * u01(rng));
      tm.phase[j] = static_cast<float>(2.0 * std::numbers::pi * u01(rng));
      tm.slope[j] = static_cast<float>(2.0 * u01(rng) - 1.0);
      for (std::size_t e = 0; e < cfg.embedding_dims; ++e) {
        tm.v(j, e) = static_cast<float>(2.0 * u01(rng) - 1.0);
        tm.v2(j, e) = static_cast<float>(2.0 * u01(rng) - 1.0);
      }
    }
    return tm;
  }

  float eval(std::size_t j, std::span<const float> emb, float pos) const {
    float dot = 0.0f, dot2 = 0.0f;
    for (std::size_t e = 0; e < emb.size(); ++e) {
      dot += v(j, e) * emb[e];
      dot2 += v2(j, e) * emb[e];
    }
    return amp[j] * std::sin(freq[j] * dot + sweep[j] * pos + phase[j]) +
           slope[j] * dot2;
  }
};

std::vector<Block> target_blocks(std::size_t frame_dim) {
  const FeatureLayout speech;
  if (frame_dim == speech.dim()) return LossConfig::speech_blocks(frame_dim);
  return {{0, frame_dim}};
}

}  // namespace

GeneratedCorpus generate(const CorpusConfig& cfg) {
  cfg.validate();

  Rng table_rng(derive_seed(cfg.seed, 1));
  MatF embeddings(cfg.inventory, cfg.embedding_dims);
  {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (float& v : embeddings.v) v = static_cast<float>(2.0 * u01(table_rng) - 1.0);
    // Silence sits at the embedding origin so its targets are flat.
    for (std::size_t e = 0; e < cfg.embedding_dims; ++e) embeddings(kSilenceId, e) = 0.0f;
  }
  const TargetMap tmap = TargetMap::make(cfg, table_rng);
  const std::vector<Block> blocks = target_blocks(cfg.frame_dim);
  const FeatureLayout speech;
  const bool speech_dims = cfg.frame_dim == speech.dim();

  GeneratedCorpus corpus;
  corpus.input_dim = cfg.input_dim();
  corpus.frame_dim = cfg.frame_dim;
  corpus.phoneme_feature_dim = cfg.phoneme_feature_dim();

  for (std::size_t ui = 0; ui < cfg.utterances; ++ui) {
    Rng rng(derive_seed(cfg.seed, 1000 + ui));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Phoneme string: silence at both edges, seeded interior.
    std::uniform_int_distribution<std::size_t> n_interior(cfg.min_phonemes,
                                                          cfg.max_phonemes);
    std::uniform_int_distribution<std::size_t> speech_id(1, cfg.inventory - 1);
    std::vector<std::size_t> ids;
    ids.push_back(kSilenceId);
    const std::size_t interior = n_interior(rng);
    for (std::size_t p = 0; p < interior; ++p)
      ids.push_back(u01(rng) < cfg.silence_rate ? kSilenceId : speech_id(rng));
    ids.push_back(kSilenceId);

    UtteranceData u;
    {
      std::ostringstream name;
      name << "utt" << std::setw(4) << std::setfill('0') << ui;
      u.id = name.str();
    }
    std::uniform_int_distribution<std::uint32_t> dur_dist(
        static_cast<std::uint32_t>(cfg.min_duration),
        static_cast<std::uint32_t>(cfg.max_duration));
    u.phoneme_durations.resize(ids.size());
    for (std::uint32_t& d : u.phoneme_durations) d = dur_dist(rng);

    // Per-phoneme features: one-hot + embedding; frame level adds positions.
    MatF phon_feats(ids.size(), cfg.phoneme_feature_dim());
    for (std::size_t p = 0; p < ids.size(); ++p) {
      phon_feats(p, ids[p]) = 1.0f;
      for (std::size_t e = 0; e < cfg.embedding_dims; ++e)
        phon_feats(p, cfg.inventory + e) = embeddings(ids[p], e);
    }
    u.linguistic = upsample(phon_feats, u.phoneme_durations);
    const std::size_t t_total = u.linguistic.rows;

    u.silence_mask.assign(t_total, 0);
    {
      std::size_t t = 0;
      for (std::size_t p = 0; p < ids.size(); ++p)
        for (std::uint32_t i = 0; i < u.phoneme_durations[p]; ++i, ++t)
          u.silence_mask[t] = ids[p] == kSilenceId ? 1 : 0;
    }

    // Clean targets: smooth map of (embedding, position), one-pole filtered,
    // plus low-pass noise. The voicing flag (speech layout only) stays an
    // exact 0/1 signal.
    MatF clean(t_total, cfg.frame_dim);
    {
      const float pole = static_cast<float>(cfg.smoothness);
      std::vector<float> lp(cfg.frame_dim, 0.0f), nz(cfg.frame_dim, 0.0f);
      std::size_t t = 0;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        const std::span<const float> emb =
            std::span<const float>(phon_feats.row(p)).subspan(cfg.inventory,
                                                              cfg.embedding_dims);
        const float dur = static_cast<float>(u.phoneme_durations[p]);
        for (std::uint32_t i = 0; i < u.phoneme_durations[p]; ++i, ++t) {
          const float pos = static_cast<float>(i) / dur;
          for (std::size_t j = 0; j < cfg.frame_dim; ++j) {
            const float raw = tmap.eval(j, emb, pos);
            const float target = t == 0 ? raw : pole * lp[j] + (1.0f - pole) * raw;
            lp[j] = target;
            const float eta =
                static_cast<float>(cfg.noise_level * gauss(rng));
            nz[j] = t == 0 ? eta : pole * nz[j] + (1.0f - pole) * eta;
            clean(t, j) = target + nz[j];
          }
          if (speech_dims)
            clean(t, speech.vuv_index()) = u.silence_mask[t] ? 0.0f : 1.0f;
        }
      }
    }

    // Outliers: exactly round(rate * T) frames, each displaced in one seeded
    // block by outlier_magnitude clean-target standard deviations.
    u.acoustic = clean;
    std::vector<std::uint8_t> outlier_mask(t_total, 0);
    const std::size_t n_out = static_cast<std::size_t>(
        std::lround(cfg.outlier_rate * static_cast<double>(t_total)));
    if (n_out > 0) {
      std::vector<double> sigma(cfg.frame_dim, 0.0);
      for (std::size_t j = 0; j < cfg.frame_dim; ++j) {
        double mean = 0.0;
        for (std::size_t t = 0; t < t_total; ++t) mean += clean(t, j);
        mean /= static_cast<double>(t_total);
        double var = 0.0;
        for (std::size_t t = 0; t < t_total; ++t) {
          const double dev = clean(t, j) - mean;
          var += dev * dev;
        }
        sigma[j] = std::max(0.05, std::sqrt(var / static_cast<double>(t_total)));
      }

      std::vector<std::size_t> frames_idx(t_total);
      std::iota(frames_idx.begin(), frames_idx.end(), 0);
      std::shuffle(frames_idx.begin(), frames_idx.end(), rng);
      std::uniform_int_distribution<std::size_t> block_pick(0, blocks.size() - 1);
      for (std::size_t n = 0; n < n_out; ++n) {
        const std::size_t t = frames_idx[n];
        const Block& blk = blocks[block_pick(rng)];
        for (std::size_t j = blk.begin; j < blk.end; ++j)
          u.acoustic(t, j) += static_cast<float>(cfg.outlier_magnitude * sigma[j]);
        outlier_mask[t] = 1;
      }
    }

    u.validate();
    corpus.utts.push_back(std::move(u));
    corpus.clean.push_back(std::move(clean));
    corpus.outliers.push_back(std::move(outlier_mask));
  }
  return corpus;
}

SplitIndices split(std::size_t count, double train_frac, double dev_frac,
                   double test_frac, std::uint64_t seed) {
  for (double f : {train_frac, dev_frac, test_frac})
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split: fractions must be in [0, 1]");
  if (std::abs(train_frac + dev_frac + test_frac - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 42));
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t n_train = static_cast<std::size_t>(
      std::lround(train_frac * static_cast<double>(count)));
  std::size_t n_dev = static_cast<std::size_t>(
      std::lround(dev_frac * static_cast<double>(count)));
  n_train = std::min(n_train, count);
  n_dev = std::min(n_dev, count - n_train);

  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.dev.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), order.end());
  return s;
}

namespace {

std::string mask_to_string(const std::vector<std::uint8_t>& mask) {
  std::string s(mask.size(), '0');
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) s[i] = '1';
  return s;
}

std::vector<std::uint8_t> string_to_mask(const std::string& s) {
  std::vector<std::uint8_t> mask(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1')
      throw FormatError(FormatError::Kind::Malformed, "corpus manifest: bad mask digit");
    mask[i] = s[i] == '1' ? 1 : 0;
  }
  return mask;
}

}  // namespace

void save_corpus(const GeneratedCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + dir + ": " + ec.message());

  std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write corpus manifest in " + dir);
  manifest << "utterances=" << corpus.utts.size() << " input_dim=" << corpus.input_dim
           << " frame_dim=" << corpus.frame_dim
           << " phoneme_feature_dim=" << corpus.phoneme_feature_dim << "\n";

  for (std::size_t i = 0; i < corpus.utts.size(); ++i) {
    const UtteranceData& u = corpus.utts[i];
    manifest << "utt id=" << u.id << " frames=" << u.frames()
             << " phonemes=" << u.phonemes() << " durations=";
    for (std::size_t p = 0; p < u.phonemes(); ++p) {
      if (p) manifest << ',';
      manifest << u.phoneme_durations[p];
    }
    manifest << " silence=" << mask_to_string(u.silence_mask)
             << " outliers=" << mask_to_string(corpus.outliers[i]) << "\n";
    const std::string base = (fs::path(dir) / u.id).string();
    emit_features(u.linguistic, base + ".lin", FeatureFormat::Binary);
    emit_features(u.acoustic, base + ".ac", FeatureFormat::Binary);
    emit_features(corpus.clean[i], base + ".clean", FeatureFormat::Binary);
    // Position-free per-phoneme features, ready as duration-model input.
    emit_features(phoneme_features(u, 2), base + ".phon", FeatureFormat::Binary);
  }
  if (!manifest) throw IoError("write failed for corpus manifest in " + dir);
}

GeneratedCorpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw IoError("cannot open corpus manifest in " + dir);

  const auto field = [](const std::string& line, const std::string& key) {
    const std::string tag = key + "=";
    const auto at = line.find(tag);
    if (at == std::string::npos)
      throw FormatError(FormatError::Kind::Malformed,
                        "corpus manifest: missing field '" + key + "'");
    const auto end = line.find(' ', at);
    return line.substr(at + tag.size(), end == std::string::npos ? std::string::npos
                                                                 : end - at - tag.size());
  };

  GeneratedCorpus corpus;
  std::string line;
  if (!std::getline(manifest, line))
    throw FormatError(FormatError::Kind::Truncated, "empty corpus manifest");
  corpus.input_dim = std::stoull(field(line, "input_dim"));
  corpus.frame_dim = std::stoull(field(line, "frame_dim"));
  corpus.phoneme_feature_dim = std::stoull(field(line, "phoneme_feature_dim"));
  const std::size_t n = std::stoull(field(line, "utterances"));

  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(manifest, line))
      throw FormatError(FormatError::Kind::Truncated, "corpus manifest ends early");
    if (line.rfind("utt ", 0) != 0)
      throw FormatError(FormatError::Kind::Malformed, "corpus manifest: bad record");
    UtteranceData u;
    u.id = field(line, "id");
    const std::string durs = field(line, "durations");
    std::istringstream ds(durs);
    std::string tok;
    while (std::getline(ds, tok, ','))
      u.phoneme_durations.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
    u.silence_mask = string_to_mask(field(line, "silence"));
    corpus.outliers.push_back(string_to_mask(field(line, "outliers")));

    const std::string base = (fs::path(dir) / u.id).string();
    u.linguistic = read_features(base + ".lin");
    u.acoustic = read_features(base + ".ac");
    corpus.clean.push_back(read_features(base + ".clean"));
    u.validate();
    corpus.utts.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace ltts
