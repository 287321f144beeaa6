#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltts/pipeline.hpp"
#include "ltts/trainer.hpp"

namespace ltts {

// Knobs for the deterministic synthetic corpus. Targets are smooth functions
// of a per-phoneme embedding plus low-pass noise; an outlier_rate fraction of
// frames gets block-wise displacements of outlier_magnitude standard
// deviations, with the uncorrupted targets kept for evaluation.
struct CorpusConfig {
  std::uint64_t seed = 1;
  std::size_t utterances = 50;
  std::size_t inventory = 20;       // phoneme id 0 is silence
  std::size_t embedding_dims = 3;
  std::size_t min_phonemes = 3;     // interior phonemes, silence edges excluded
  std::size_t max_phonemes = 10;
  std::size_t min_duration = 2;     // frames per phoneme
  std::size_t max_duration = 12;
  double smoothness = 0.7;          // one-pole low-pass coefficient in [0, 1)
  double noise_level = 0.05;        // stddev of the low-passed target noise
  double outlier_rate = 0.0;
  double outlier_magnitude = 10.0;  // displacement in clean-target stddevs
  double silence_rate = 0.1;        // chance an interior phoneme is silence
  std::size_t frame_dim = 49;

  // Per-frame linguistic dim: one-hot + embedding + 2 position features.
  std::size_t input_dim() const { return inventory + embedding_dims + 2; }
  std::size_t phoneme_feature_dim() const { return inventory + embedding_dims; }

  void validate() const;
};

struct GeneratedCorpus {
  std::vector<UtteranceData> utts;               // acoustic = contaminated targets
  std::vector<MatF> clean;                       // pre-outlier targets, same shapes
  std::vector<std::vector<std::uint8_t>> outliers;  // per-frame displacement flags
  std::size_t input_dim = 0;
  std::size_t frame_dim = 0;
  std::size_t phoneme_feature_dim = 0;
};

GeneratedCorpus generate(const CorpusConfig& cfg);

struct SplitIndices {
  std::vector<std::size_t> train, dev, test;
};

// Seeded disjoint exhaustive split; fractions must sum to 1.
SplitIndices split(std::size_t count, double train_frac, double dev_frac,
                   double test_frac, std::uint64_t seed);

// Corpus directory: manifest.txt plus <id>.lin / <id>.ac / <id>.clean feature
// files in the binary feature format.
void save_corpus(const GeneratedCorpus& corpus, const std::string& dir);
GeneratedCorpus load_corpus(const std::string& dir);

}  // namespace ltts
