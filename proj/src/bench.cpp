#include "ltts/bench.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ltts/errors.hpp"
#include "ltts/rng.hpp"

namespace ltts {

StepCost step_cost(const NetworkSpec& spec) {
  StepCost cost;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::size_t in = spec.layer_input_dim(i);
    switch (l.kind) {
      case LayerKind::FeedForward:
        cost.madds += l.units * in;
        break;
      case LayerKind::Lstmp: {
        const std::size_t rec = l.projection > 0 ? l.projection : l.units;
        cost.madds += 4 * l.units * in + 4 * l.units * rec;
        if (l.projection > 0) cost.madds += l.projection * l.units;
        ++cost.recurrent_layers;
        break;
      }
      case LayerKind::RecurrentLinear:
        cost.madds += l.units * in + l.units * l.units;
        ++cost.recurrent_layers;
        break;
    }
  }
  return cost;
}

SynthesisCost synthesis_cost(const NetworkSpec& spec, std::size_t frames) {
  const StepCost per_step = step_cost(spec);
  SynthesisCost c;
  c.network_steps = (frames + spec.bundle_size - 1) / spec.bundle_size;
  c.madds = c.network_steps * per_step.madds;
  c.recurrent_layer_steps = c.network_steps * per_step.recurrent_layers;
  return c;
}

std::vector<std::pair<std::string, std::string>> environment_meta() {
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("compiler", __VERSION__);
  meta.emplace_back("pointer_bits", std::to_string(8 * sizeof(void*)));
#ifdef NDEBUG
  meta.emplace_back("build", "release");
#else
  meta.emplace_back("build", "debug");
#endif
  return meta;
}

MatF random_frame_inputs(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  MatF m(frames, dim);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (float& v : m.v) v = static_cast<float>(gauss(rng));
  return m;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw ConfigError("median: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

std::vector<std::pair<std::string, std::size_t>> default_scales() {
  return {{"char", 10}, {"word", 60}, {"sentence", 500}, {"paragraph", 4400}};
}

std::vector<BenchRecord> measure_latency(const NetworkSpec& spec, const Weights& w,
                                         const ModelNorms* norms, std::size_t chunk_size,
                                         std::size_t reps, std::uint64_t seed) {
  if (reps == 0) throw ConfigError("measure_latency: reps must be >= 1");
  std::vector<BenchRecord> records;
  for (const auto& [name, frames] : default_scales()) {
    const MatF inputs = random_frame_inputs(frames, spec.input_dim, derive_seed(seed, frames));
    std::vector<double> firsts, totals;
    BenchRecord rec;
    rec.scale = name;
    rec.frames = frames;
    for (std::size_t r = 0; r < reps + 1; ++r) {  // first run warms caches, discarded
      MatFrameSource source(inputs);
      const SynthesisResult out = synthesize_stream(spec, w, norms, source, chunk_size);
      if (r == 0) {
        rec.network_steps = out.report.network_steps;
        rec.recurrent_layer_steps =
            out.report.network_steps * step_cost(spec).recurrent_layers;
        continue;
      }
      firsts.push_back(out.report.first_chunk_ms);
      totals.push_back(out.report.total_ms);
    }
    rec.latency_ms = median(firsts);
    rec.total_ms = median(totals);
    records.push_back(rec);
  }
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].total_ms < records[i - 1].total_ms)
      throw NumericError("measure_latency: total time decreased from scale " +
                         records[i - 1].scale + " to " + records[i].scale +
                         "; rerun on a quiet machine");
  }
  return records;
}

Divergence divergence(const MatF& a, const MatF& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("divergence: shape mismatch");
  Divergence d;
  if (a.rows == 0 || a.cols == 0) return d;
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) {
      const double diff = static_cast<double>(a(r, c)) - static_cast<double>(b(r, c));
      row += diff * diff;
    }
    total += row;
    d.max_frame_rms = std::max(d.max_frame_rms,
                               std::sqrt(row / static_cast<double>(a.cols)));
  }
  d.overall_rms = std::sqrt(total / static_cast<double>(a.rows * a.cols));
  return d;
}

std::string BenchReport::to_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : meta) out << "meta." << k << "=" << v << "\n";
  for (const BenchRecord& r : records) {
    out << "record." << r.scale << ".frames=" << r.frames << "\n";
    out << "record." << r.scale << ".network_steps=" << r.network_steps << "\n";
    out << "record." << r.scale << ".recurrent_layer_steps=" << r.recurrent_layer_steps
        << "\n";
    out << "record." << r.scale << ".latency_ms=" << r.latency_ms << "\n";
    out << "record." << r.scale << ".total_ms=" << r.total_ms << "\n";
  }
  if (footprint_float_bytes) {
    out << "footprint.float_bytes=" << footprint_float_bytes << "\n";
    out << "footprint.quantized_bytes=" << footprint_quant_bytes << "\n";
    if (footprint_quant_bytes)
      out << "footprint.ratio="
          << static_cast<double>(footprint_quant_bytes) /
                 static_cast<double>(footprint_float_bytes)
          << "\n";
  }
  for (const auto& [k, v] : metrics) out << "metric." << k << "=" << v << "\n";
  return out.str();
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  for (const auto& [k, v] : meta) j["meta"][k] = v;
  j["records"] = nlohmann::json::array();
  for (const BenchRecord& r : records) {
    j["records"].push_back({{"scale", r.scale},
                            {"frames", r.frames},
                            {"network_steps", r.network_steps},
                            {"recurrent_layer_steps", r.recurrent_layer_steps},
                            {"latency_ms", r.latency_ms},
                            {"total_ms", r.total_ms}});
  }
  if (footprint_float_bytes) {
    j["footprint"]["float_bytes"] = footprint_float_bytes;
    j["footprint"]["quantized_bytes"] = footprint_quant_bytes;
    if (footprint_quant_bytes)
      j["footprint"]["ratio"] = static_cast<double>(footprint_quant_bytes) /
                                static_cast<double>(footprint_float_bytes);
  }
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  return j.dump(2) + "\n";
}

}  // namespace ltts
