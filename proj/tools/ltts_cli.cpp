// ltts: corpus generation, training, quantization, streaming synthesis and
// benchmarking for the bundled LSTM speech-parameter engine.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ltts/bench.hpp"
#include "ltts/config.hpp"
#include "ltts/corpus.hpp"
#include "ltts/errors.hpp"
#include "ltts/pipeline.hpp"
#include "ltts/quantstore.hpp"
#include "ltts/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitNumeric = 5;

struct CommonOpts {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string out;
  std::string format = "bin";
};

ltts::KeyValueConfig load_cfg(const std::string& path) {
  if (path.empty()) return ltts::KeyValueConfig{};
  return ltts::KeyValueConfig::parse_file(path);
}

void write_text_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ltts::IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw ltts::IoError("write failed: " + path);
}

// ---- gen-corpus ----

int run_gen_corpus(const CommonOpts& common) {
  if (common.out.empty()) throw ltts::ConfigError("gen-corpus: --out directory required");
  const ltts::KeyValueConfig cfg = load_cfg(common.config_path);
  ltts::CorpusConfig cc;
  cc.seed = common.seed;
  cc.utterances = cfg.get_size("utterances", cc.utterances);
  cc.inventory = cfg.get_size("inventory", cc.inventory);
  cc.embedding_dims = cfg.get_size("embedding_dims", cc.embedding_dims);
  cc.min_phonemes = cfg.get_size("min_phonemes", cc.min_phonemes);
  cc.max_phonemes = cfg.get_size("max_phonemes", cc.max_phonemes);
  cc.min_duration = cfg.get_size("min_duration", cc.min_duration);
  cc.max_duration = cfg.get_size("max_duration", cc.max_duration);
  cc.smoothness = cfg.get_double("smoothness", cc.smoothness);
  cc.noise_level = cfg.get_double("noise_level", cc.noise_level);
  cc.outlier_rate = cfg.get_double("outlier_rate", cc.outlier_rate);
  cc.outlier_magnitude = cfg.get_double("outlier_magnitude", cc.outlier_magnitude);
  cc.silence_rate = cfg.get_double("silence_rate", cc.silence_rate);
  cc.frame_dim = cfg.get_size("frame_dim", cc.frame_dim);

  const ltts::GeneratedCorpus corpus = ltts::generate(cc);
  ltts::save_corpus(corpus, common.out);
  std::size_t frames = 0;
  for (const auto& u : corpus.utts) frames += u.frames();
  std::cout << "corpus: " << corpus.utts.size() << " utterances, " << frames
            << " frames, input_dim=" << corpus.input_dim
            << ", frame_dim=" << corpus.frame_dim << " -> " << common.out << "\n";
  return kExitOk;
}

// ---- train ----

int run_train(const CommonOpts& common, const std::string& corpus_dir, bool duration_model,
              std::size_t k, bool quantize) {
  if (corpus_dir.empty()) throw ltts::ConfigError("train: --corpus directory required");
  if (common.out.empty()) throw ltts::ConfigError("train: --out model path required");

  ltts::KeyValueConfig cfg = load_cfg(common.config_path);
  if (!cfg.has("seed")) cfg.set("seed", std::to_string(common.seed));
  if (k > 0) cfg.set("k", std::to_string(k));

  const ltts::GeneratedCorpus corpus = ltts::load_corpus(corpus_dir);
  const ltts::SplitIndices idx =
      ltts::split(corpus.utts.size(), cfg.get_double("split_train", 0.8),
                  cfg.get_double("split_dev", 0.1), cfg.get_double("split_test", 0.1),
                  cfg.get_u64("split_seed", common.seed));
  if (idx.train.empty() || idx.dev.empty())
    throw ltts::ConfigError("train: corpus too small for a train/dev split");

  ltts::NetworkSpec spec;
  ltts::PreparedData data;
  std::size_t frame_dim = 0;
  if (duration_model) {
    frame_dim = 1;
    data = ltts::prepare_duration(corpus.utts, idx.train, idx.dev, 2);
    spec = ltts::NetworkSpec::duration(corpus.phoneme_feature_dim,
                                       cfg.get_size("arch.cells", 64));
  } else {
    frame_dim = corpus.frame_dim;
    const ltts::TrainConfig probe = ltts::train_config_from(cfg, frame_dim, false);
    data = ltts::prepare_acoustic(corpus.utts, idx.train, idx.dev, probe.bundle_size,
                                  probe.augment, probe.silence_keep_fraction, probe.seed);
    spec = ltts::NetworkSpec::acoustic(
        corpus.input_dim, frame_dim, probe.bundle_size,
        cfg.get_size("arch.ff_units", 128), cfg.get_size("arch.lstm_layers", 3),
        cfg.get_size("arch.cells", 128), cfg.get_size("arch.projection", 64));
  }
  const ltts::TrainConfig tc = ltts::train_config_from(cfg, frame_dim, duration_model);

  std::cout << "training " << (duration_model ? "duration" : "acoustic") << " model: "
            << spec.parameter_count() << " parameters, k=" << spec.bundle_size
            << ", lr=" << tc.learning_rate << ", " << data.train.size()
            << " train sequences, " << data.dev.size() << " dev sequences\n";

  const ltts::TrainResult res = ltts::train(spec, data.train, data.dev, tc);
  for (const ltts::TrainLogEntry& e : res.log) {
    std::printf("step=%zu train_loss=%.6f dev_loss=%.6f lr=%.3e wall_ms=%.1f\n", e.step,
                e.train_loss, e.dev_loss, e.lr, e.wall_ms);
  }
  std::cout << (res.converged ? "converged" : "stopped") << " after " << res.steps
            << " steps\n";

  const std::size_t bytes =
      ltts::save_model(spec, res.weights, quantize, common.out, data.norms);
  std::cout << "model: " << bytes << " bytes (" << (quantize ? "int8" : "float")
            << " weights) -> " << common.out << "\n";
  return kExitOk;
}

// ---- quantize ----

int run_quantize(const CommonOpts& common, const std::string& in_path) {
  if (in_path.empty()) throw ltts::ConfigError("quantize: --in model path required");
  if (common.out.empty()) throw ltts::ConfigError("quantize: --out model path required");
  const ltts::ModelFile m = ltts::load_model(in_path);
  const std::size_t in_bytes = std::filesystem::file_size(in_path);
  const std::size_t out_bytes =
      ltts::save_model(m.spec, m.weights, true, common.out, m.norms);
  std::cout << "quantized: " << in_bytes << " -> " << out_bytes << " bytes (ratio "
            << static_cast<double>(out_bytes) / static_cast<double>(in_bytes) << ")\n";
  return kExitOk;
}

// ---- synth ----

int run_synth(const CommonOpts& common, const std::string& model_path,
              const std::string& durations_path, const std::string& phonemes_path,
              std::size_t k, std::size_t chunk) {
  if (model_path.empty()) throw ltts::ConfigError("synth: --model path required");
  if (durations_path.empty()) throw ltts::ConfigError("synth: --durations model required");
  if (phonemes_path.empty()) throw ltts::ConfigError("synth: --phonemes file required");
  if (common.out.empty()) throw ltts::ConfigError("synth: --out path required");
  if (common.format == "json-report")
    throw ltts::ConfigError("synth: --format must be bin or text");

  const ltts::ModelFile acoustic = ltts::load_model(model_path);
  const ltts::ModelFile duration = ltts::load_model(durations_path);
  if (k > 0 && k != acoustic.spec.bundle_size)
    throw ltts::ConfigError("synth: --k " + std::to_string(k) +
                            " does not match model bundle size " +
                            std::to_string(acoustic.spec.bundle_size));

  const ltts::MatF phonemes = ltts::read_features(phonemes_path);
  if (phonemes.rows == 0) throw ltts::ConfigError("synth: empty phoneme list");

  const ltts::ModelNorms* dn = duration.norms ? &*duration.norms : nullptr;
  const std::vector<std::uint32_t> durs =
      ltts::predict_durations(duration.spec, duration.weights, dn, phonemes);
  const ltts::MatF inputs = ltts::upsample(phonemes, durs);

  ltts::MatFrameSource source(inputs);
  const ltts::FeatureLayout layout;
  const ltts::FeatureLayout* lp =
      acoustic.spec.frame_dim == layout.dim() ? &layout : nullptr;
  const ltts::ModelNorms* an = acoustic.norms ? &*acoustic.norms : nullptr;
  const ltts::SynthesisResult res =
      ltts::synthesize_stream(acoustic.spec, acoustic.weights, an, source, chunk, lp);

  const ltts::FeatureFormat fmt =
      common.format == "text" ? ltts::FeatureFormat::Text : ltts::FeatureFormat::Binary;
  const std::size_t bytes = ltts::emit_features(res.frames, common.out, fmt);
  std::cout << "synthesized " << res.report.frames << " frames in "
            << res.report.network_steps << " network steps, first chunk after "
            << res.report.first_chunk_ms << " ms, total " << res.report.total_ms
            << " ms, " << bytes << " bytes -> " << common.out << "\n";
  return kExitOk;
}

// ---- bench ----

int run_bench(const CommonOpts& common, const std::string& model_path, std::size_t chunk,
              std::size_t reps) {
  if (model_path.empty()) throw ltts::ConfigError("bench: --model path required");
  const ltts::ModelFile m = ltts::load_model(model_path);
  const ltts::ModelNorms* norms = m.norms ? &*m.norms : nullptr;

  ltts::BenchReport report;
  report.meta = ltts::environment_meta();
  report.add_meta("model", model_path);
  report.add_meta("k", std::to_string(m.spec.bundle_size));
  report.add_meta("chunk", std::to_string(chunk));
  report.add_meta("reps", std::to_string(reps));
  report.add_meta("seed", std::to_string(common.seed));
  report.records = ltts::measure_latency(m.spec, m.weights, norms, chunk, reps, common.seed);
  report.footprint_float_bytes = ltts::encode_model(m.spec, m.weights, false, m.norms).size();
  report.footprint_quant_bytes = ltts::encode_model(m.spec, m.weights, true, m.norms).size();
  const ltts::StepCost cost = ltts::step_cost(m.spec);
  report.add_metric("step_madds", static_cast<double>(cost.madds));
  report.add_metric("recurrent_layers", static_cast<double>(cost.recurrent_layers));

  write_text_output(common.out,
                    common.format == "json-report" ? report.to_json() : report.to_text());
  return kExitOk;
}

// ---- compare ----

int run_compare(const CommonOpts& common, const std::string& a_path,
                const std::string& b_path, std::size_t frames, std::size_t chunk,
                std::size_t reps) {
  if (a_path.empty() || b_path.empty())
    throw ltts::ConfigError("compare: --a and --b model paths required");
  const ltts::ModelFile a = ltts::load_model(a_path);
  const ltts::ModelFile b = ltts::load_model(b_path);
  if (a.spec.input_dim != b.spec.input_dim || a.spec.frame_dim != b.spec.frame_dim)
    throw ltts::ConfigError("compare: models disagree on input/frame dims");

  const ltts::MatF inputs =
      ltts::random_frame_inputs(frames, a.spec.input_dim, ltts::derive_seed(common.seed, 7));

  const auto synth_once = [&](const ltts::ModelFile& m) {
    ltts::MatFrameSource source(inputs);
    const ltts::ModelNorms* n = m.norms ? &*m.norms : nullptr;
    return ltts::synthesize_stream(m.spec, m.weights, n, source, chunk);
  };
  const auto timed = [&](const ltts::ModelFile& m) {
    std::vector<double> totals;
    synth_once(m);  // warm-up
    for (std::size_t r = 0; r < reps; ++r) totals.push_back(synth_once(m).report.total_ms);
    return ltts::median(totals);
  };

  const ltts::SynthesisResult ra = synth_once(a);
  const ltts::SynthesisResult rb = synth_once(b);
  const ltts::Divergence div = ltts::divergence(ra.frames, rb.frames);
  const double ta = timed(a);
  const double tb = timed(b);
  const ltts::SynthesisCost ca = ltts::synthesis_cost(a.spec, frames);
  const ltts::SynthesisCost cb = ltts::synthesis_cost(b.spec, frames);

  ltts::BenchReport report;
  report.meta = ltts::environment_meta();
  report.add_meta("model_a", a_path);
  report.add_meta("model_b", b_path);
  report.add_meta("frames", std::to_string(frames));
  report.add_meta("k_a", std::to_string(a.spec.bundle_size));
  report.add_meta("k_b", std::to_string(b.spec.bundle_size));
  report.footprint_float_bytes =
      ltts::encode_model(a.spec, a.weights, false, a.norms).size();
  report.footprint_quant_bytes =
      ltts::encode_model(a.spec, a.weights, true, a.norms).size();
  report.add_metric("frames_a", static_cast<double>(ra.report.frames));
  report.add_metric("frames_b", static_cast<double>(rb.report.frames));
  report.add_metric("rms_divergence", div.overall_rms);
  report.add_metric("max_frame_rms", div.max_frame_rms);
  report.add_metric("total_ms_a", ta);
  report.add_metric("total_ms_b", tb);
  report.add_metric("walltime_reduction", ta > 0 ? 1.0 - tb / ta : 0.0);
  report.add_metric("recurrent_steps_a", static_cast<double>(ca.recurrent_layer_steps));
  report.add_metric("recurrent_steps_b", static_cast<double>(cb.recurrent_layer_steps));
  report.add_metric("recurrent_step_reduction",
                    1.0 - static_cast<double>(cb.recurrent_layer_steps) /
                              static_cast<double>(ca.recurrent_layer_steps));

  write_text_output(common.out,
                    common.format == "json-report" ? report.to_json() : report.to_text());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming LSTM speech-parameter engine"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string corpus_dir, in_path, model_path, durations_path, phonemes_path;
  std::string a_path, b_path;
  bool duration_model = false, quantize = false;
  std::size_t k = 0, chunk = 50, reps = 5, frames = 2000;

  const auto add_common = [&](CLI::App* sub, bool with_format = true) {
    sub->add_option("--seed", common.seed, "random seed");
    sub->add_option("--config", common.config_path, "key=value config file");
    sub->add_option("--out", common.out, "output path");
    if (with_format)
      sub->add_option("--format", common.format, "output format")
          ->check(CLI::IsMember({"bin", "text", "json-report"}));
  };

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a synthetic aligned corpus");
  add_common(gen, false);

  CLI::App* train = app.add_subcommand("train", "train an acoustic or duration model");
  add_common(train, false);
  train->add_option("--corpus", corpus_dir, "corpus directory");
  train->add_flag("--duration", duration_model, "train the duration model");
  train->add_option("--k", k, "frames per network step (acoustic model)");
  train->add_flag("--quantize", quantize, "store int8 weights in the output model");

  CLI::App* quant = app.add_subcommand("quantize", "rewrite a model with int8 weights");
  add_common(quant, false);
  quant->add_option("--in", in_path, "input model path");

  CLI::App* synth = app.add_subcommand("synth", "stream acoustic frames for a phoneme list");
  add_common(synth);
  synth->add_option("--model", model_path, "acoustic model path");
  synth->add_option("--durations", durations_path, "duration model path");
  synth->add_option("--phonemes", phonemes_path, "per-phoneme feature file");
  synth->add_option("--k", k, "expected bundle size (must match the model)");
  synth->add_option("--chunk", chunk, "frames per emitted chunk");

  CLI::App* bench = app.add_subcommand("bench", "latency/footprint report for one model");
  add_common(bench);
  bench->add_option("--model", model_path, "model path");
  bench->add_option("--chunk", chunk, "frames per emitted chunk");
  bench->add_option("--reps", reps, "timing repetitions (after 1 warm-up)");

  CLI::App* cmp = app.add_subcommand("compare", "output/timing comparison of two models");
  add_common(cmp);
  cmp->add_option("--a", a_path, "first model path");
  cmp->add_option("--b", b_path, "second model path");
  cmp->add_option("--frames", frames, "input length for the comparison");
  cmp->add_option("--chunk", chunk, "frames per emitted chunk");
  cmp->add_option("--reps", reps, "timing repetitions (after 1 warm-up)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return run_gen_corpus(common);
    if (*train) return run_train(common, corpus_dir, duration_model, k, quantize);
    if (*quant) return run_quantize(common, in_path);
    if (*synth) return run_synth(common, model_path, durations_path, phonemes_path, k, chunk);
    if (*bench) return run_bench(common, model_path, chunk, reps);
    if (*cmp) return run_compare(common, a_path, b_path, frames, chunk, reps);
  } catch (const ltts::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ltts::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ltts::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ltts::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
