#include "ltts/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ltts/errors.hpp"
#include "ltts/io_util.hpp"

namespace ltts {

std::vector<std::uint32_t> predict_durations(const NetworkSpec& spec, const Weights& w,
                                             const ModelNorms* norms,
                                             const MatF& phoneme_feats) {
  if (phoneme_feats.cols != spec.input_dim)
    throw ShapeError("predict_durations: feature dim " + std::to_string(phoneme_feats.cols) +
                     " != model input dim " + std::to_string(spec.input_dim));
  if (spec.output_dim() != 1)
    throw ConfigError("predict_durations: duration model must emit one value per phoneme");
  if (phoneme_feats.rows == 0) throw ConfigError("predict_durations: empty phoneme list");

  StreamState st = StreamState::zero(spec);
  std::vector<std::uint32_t> out(phoneme_feats.rows);
  std::vector<float> x(spec.input_dim);
  for (std::size_t p = 0; p < phoneme_feats.rows; ++p) {
    std::copy(phoneme_feats.row(p).begin(), phoneme_feats.row(p).end(), x.begin());
    if (norms) norms->input.apply(x);
    std::vector<float> y = forward_step<float>(spec, w, st, x);
    if (norms) norms->output.unapply(y);
    const double frames = std::max(1.0, static_cast<double>(y[0]));
    out[p] = static_cast<std::uint32_t>(std::lround(frames));
  }
  return out;
}

MatF upsample(const MatF& phoneme_feats, const std::vector<std::uint32_t>& durations) {
  if (durations.size() != phoneme_feats.rows)
    throw ShapeError("upsample: one duration per phoneme required");
  std::size_t total = 0;
  for (std::uint32_t d : durations) {
    if (d == 0) throw ConfigError("upsample: durations must be >= 1");
    total += d;
  }
  MatF out(total, phoneme_feats.cols + 2);
  std::size_t t = 0;
  for (std::size_t p = 0; p < phoneme_feats.rows; ++p) {
    const float dur = static_cast<float>(durations[p]);
    for (std::uint32_t i = 0; i < durations[p]; ++i, ++t) {
      std::span<float> row = out.row(t);
      std::copy(phoneme_feats.row(p).begin(), phoneme_feats.row(p).end(), row.begin());
      row[phoneme_feats.cols] = static_cast<float>(i) / dur;
      row[phoneme_feats.cols + 1] = static_cast<float>(durations[p] - i) / dur;
    }
  }
  return out;
}

SynthesisResult synthesize_stream(const NetworkSpec& spec, const Weights& w,
                                  const ModelNorms* norms, FrameSource& source,
                                  std::size_t chunk_size, const FeatureLayout* layout) {
  if (chunk_size == 0) throw ConfigError("synthesize_stream: chunk size must be >= 1");
  const std::size_t t_total = source.frames();
  if (t_total == 0) throw ConfigError("synthesize_stream: no frames to synthesize");
  const std::size_t k = spec.bundle_size;
  const std::size_t d = spec.frame_dim;
  if (layout && layout->dim() != d)
    throw ConfigError("synthesize_stream: model frame dim " + std::to_string(d) +
                      " does not match feature layout " + std::to_string(layout->dim()));

  SynthesisResult res;
  res.frames = MatF(t_total, d);
  StreamState st = StreamState::zero(spec);
  std::vector<float> x(spec.input_dim);

  std::size_t emitted = 0;   // frames already assigned to a chunk
  std::size_t produced = 0;  // frames written to res.frames
  const auto t0 = std::chrono::steady_clock::now();
  const auto ms_since_start = [&t0] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  const auto flush = [&](std::size_t n) {
    res.chunk_sizes.push_back(n);
    emitted += n;
    if (res.chunk_sizes.size() == 1) {
      res.report.first_chunk_ms = ms_since_start();
      res.report.steps_to_first_chunk = res.report.network_steps;
    }
  };

  for (std::size_t b = 0; produced < t_total; ++b) {
    const std::size_t last_real = std::min(b * k + k - 1, t_total - 1);
    std::span<const float> raw = source.frame(last_real);
    if (raw.size() != spec.input_dim)
      throw ShapeError("synthesize_stream: source frame dim mismatch");
    std::copy(raw.begin(), raw.end(), x.begin());
    if (norms) norms->input.apply(x);

    std::vector<float> y = forward_step<float>(spec, w, st, x);
    ++res.report.network_steps;
    const std::size_t take = std::min(k, t_total - produced);
    for (std::size_t i = 0; i < take; ++i, ++produced) {
      std::span<float> row = res.frames.row(produced);
      std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(i * d), d, row.begin());
      if (norms) norms->output.unapply(row);
      if (layout) row[layout->vuv_index()] = std::clamp(row[layout->vuv_index()], 0.0f, 1.0f);
    }
    while (produced - emitted >= chunk_size) flush(chunk_size);
  }
  if (produced > emitted) flush(produced - emitted);

  res.report.frames = produced;
  res.report.chunks = res.chunk_sizes.size();
  res.report.total_ms = ms_since_start();
  return res;
}

namespace {

constexpr char kFrameMagic[4] = {'A', 'F', 'R', 'M'};
constexpr std::uint32_t kFrameVersion = 1;

std::size_t write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path);
  return data.size();
}

MatF parse_text_features(const std::string& text, const std::string& path) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header))
    throw FormatError(FormatError::Kind::Truncated, "empty feature file: " + path);
  std::size_t frames = 0, dim = 0;
  if (std::sscanf(header.c_str(), "frames=%zu dim=%zu", &frames, &dim) != 2)
    throw FormatError(FormatError::Kind::Malformed,
                      "bad feature text header in " + path + ": " + header);
  MatF m(frames, dim);
  for (std::size_t r = 0; r < frames; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      if (!(in >> m(r, c)))
        throw FormatError(FormatError::Kind::Truncated,
                          "feature text ends early in " + path);
    }
  }
  float extra;
  if (in >> extra)
    throw FormatError(FormatError::Kind::Malformed, "trailing data in " + path);
  return m;
}

}  // namespace

std::size_t emit_features(const MatF& frames, const std::string& path, FeatureFormat fmt) {
  if (fmt == FeatureFormat::Binary) {
    ByteWriter bw;
    bw.put_bytes(kFrameMagic, 4);
    bw.put_u32(kFrameVersion);
    bw.put_u32(static_cast<std::uint32_t>(frames.rows));
    bw.put_u32(static_cast<std::uint32_t>(frames.cols));
    for (float v : frames.v) bw.put_f32(v);
    return write_file(path, bw.data());
  }
  std::ostringstream out;
  out << "frames=" << frames.rows << " dim=" << frames.cols << "\n";
  char buf[64];
  for (std::size_t r = 0; r < frames.rows; ++r) {
    for (std::size_t c = 0; c < frames.cols; ++c) {
      // 9 significant digits: enough for float -> text -> float identity.
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(frames(r, c)));
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  return write_file(path, out.str());
}

MatF read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();

  if (data.size() < 4 || std::memcmp(data.data(), kFrameMagic, 4) != 0)
    return parse_text_features(data, path);

  ByteReader br(data);
  char magic[4];
  br.get_bytes(magic, 4);
  const std::uint32_t version = br.get_u32();
  if (version != kFrameVersion)
    throw FormatError(FormatError::Kind::BadVersion,
                      "unsupported feature file version " + std::to_string(version));
  const std::uint32_t frames = br.get_u32();
  const std::uint32_t dim = br.get_u32();
  MatF m(frames, dim);
  for (float& v : m.v) v = br.get_f32();
  if (br.remaining() != 0)
    throw FormatError(FormatError::Kind::Malformed, "trailing bytes in " + path);
  return m;
}

}  // namespace ltts
