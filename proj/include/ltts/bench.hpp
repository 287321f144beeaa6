#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ltts/network.hpp"
#include "ltts/normalize.hpp"
#include "ltts/pipeline.hpp"

namespace ltts {

// Hardware-independent cost model of one network step, in multiply-adds.
struct StepCost {
  std::size_t madds = 0;
  std::size_t recurrent_layers = 0;  // LSTMP + recurrent output layers
};

StepCost step_cost(const NetworkSpec& spec);

// Exact accounting for synthesizing `frames` frames: ceil(frames / K)
// network steps, each paying step_cost. recurrent_layer_steps is the total
// number of recurrent-layer evaluations, the quantity bundling divides by K.
struct SynthesisCost {
  std::size_t network_steps = 0;
  std::size_t madds = 0;
  std::size_t recurrent_layer_steps = 0;
};

SynthesisCost synthesis_cost(const NetworkSpec& spec, std::size_t frames);

struct BenchRecord {
  std::string scale;  // char | word | sentence | paragraph
  std::size_t frames = 0;
  std::size_t network_steps = 0;
  std::size_t recurrent_layer_steps = 0;
  double latency_ms = 0.0;  // median time to first chunk
  double total_ms = 0.0;    // median total synthesis time
};

struct BenchReport {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<BenchRecord> records;
  std::size_t footprint_float_bytes = 0;
  std::size_t footprint_quant_bytes = 0;
  std::vector<std::pair<std::string, double>> metrics;

  void add_meta(const std::string& key, const std::string& value) {
    meta.emplace_back(key, value);
  }
  void add_metric(const std::string& key, double value) { metrics.emplace_back(key, value); }

  // Line-delimited key=value rendering; see README for the key inventory.
  std::string to_text() const;
  std::string to_json() const;
};

// Compiler/build facts worth keeping next to timing numbers.
std::vector<std::pair<std::string, std::string>> environment_meta();

MatF random_frame_inputs(std::size_t frames, std::size_t dim, std::uint64_t seed);

double median(std::vector<double> xs);

// The four input-length regimes: character, word, sentence, paragraph.
std::vector<std::pair<std::string, std::size_t>> default_scales();

// Median-of-reps timing at every scale with one discarded warm-up run per
// scale. Asserts that median total time never decreases as inputs grow.
std::vector<BenchRecord> measure_latency(const NetworkSpec& spec, const Weights& w,
                                         const ModelNorms* norms, std::size_t chunk_size,
                                         std::size_t reps, std::uint64_t seed);

struct Divergence {
  double overall_rms = 0.0;
  double max_frame_rms = 0.0;
};

// Per-frame RMS difference between two equally shaped frame matrices.
Divergence divergence(const MatF& a, const MatF& b);

}  // namespace ltts
