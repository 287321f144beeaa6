#include "ltts/quantstore.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "ltts/io_util.hpp"

namespace ltts {

namespace {

constexpr char kMagic[4] = {'L', 'T', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;

enum class RecordKind : std::uint8_t { Raw = 0, Int8 = 1 };

std::uint32_t crc32_of(std::span<const char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void write_tensor(ByteWriter& w, const MatF& m, bool quantize) {
  if (quantize) {
    const QuantizedTensor t = quantize_tensor(m);
    w.put_u8(static_cast<std::uint8_t>(RecordKind::Int8));
    w.put_u32(static_cast<std::uint32_t>(t.rows));
    w.put_u32(static_cast<std::uint32_t>(t.cols));
    w.put_f32(t.scale);
    w.put_bytes(t.q.data(), t.q.size());
  } else {
    w.put_u8(static_cast<std::uint8_t>(RecordKind::Raw));
    w.put_u32(static_cast<std::uint32_t>(m.rows));
    w.put_u32(static_cast<std::uint32_t>(m.cols));
    for (float v : m.v) w.put_f32(v);
  }
}

MatF read_tensor(ByteReader& r, bool* saw_quantized) {
  const std::uint8_t kind = r.get_u8();
  const std::size_t rows = r.get_u32();
  const std::size_t cols = r.get_u32();
  if (kind == static_cast<std::uint8_t>(RecordKind::Int8)) {
    QuantizedTensor t;
    t.rows = rows;
    t.cols = cols;
    t.scale = r.get_f32();
    if (!(t.scale > 0.0f) || !std::isfinite(t.scale))
      throw FormatError(FormatError::Kind::Malformed, "invalid quantization scale");
    t.q.resize(rows * cols);
    r.get_bytes(t.q.data(), t.q.size());
    if (saw_quantized) *saw_quantized = true;
    return dequantize_tensor(t);
  }
  if (kind != static_cast<std::uint8_t>(RecordKind::Raw))
    throw FormatError(FormatError::Kind::Malformed, "unknown tensor record kind");
  MatF m(rows, cols);
  for (float& v : m.v) v = r.get_f32();
  return m;
}

std::vector<float> read_vec(ByteReader& r) {
  MatF m = read_tensor(r, nullptr);
  return std::move(m.v);
}

}  // namespace

QuantizedTensor quantize_tensor(const MatF& m) {
  if (!m.finite()) throw NumericError("quantize_tensor: non-finite input");
  float max_abs = 0.0f;
  for (float v : m.v) max_abs = std::max(max_abs, std::fabs(v));
  QuantizedTensor t;
  t.rows = m.rows;
  t.cols = m.cols;
  t.scale = max_abs > 0.0f ? max_abs / 127.0f : 1.0f;
  t.q.resize(m.v.size());
  for (std::size_t i = 0; i < m.v.size(); ++i) {
    // round half away from zero
    const float scaled = m.v[i] / t.scale;
    long q = std::lround(scaled);
    if (q > 127) q = 127;
    if (q < -127) q = -127;
    t.q[i] = static_cast<std::int8_t>(q);
  }
  return t;
}

MatF dequantize_tensor(const QuantizedTensor& t) {
  MatF m(t.rows, t.cols);
  for (std::size_t i = 0; i < t.q.size(); ++i)
    m.v[i] = static_cast<float>(t.q[i]) * t.scale;
  return m;
}

std::string encode_model(const NetworkSpec& spec, const Weights& weights, bool quantize,
                         const std::optional<ModelNorms>& norms) {
  spec.validate();
  if (weights.layers.size() != spec.layers.size())
    throw ShapeError("encode_model: weights do not match spec");

  ByteWriter body;
  body.put_u32(static_cast<std::uint32_t>(spec.input_dim));
  body.put_u32(static_cast<std::uint32_t>(spec.frame_dim));
  body.put_u32(static_cast<std::uint32_t>(spec.bundle_size));
  body.put_u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (const LayerSpec& l : spec.layers) {
    body.put_u8(static_cast<std::uint8_t>(l.kind));
    body.put_u8(static_cast<std::uint8_t>(l.act));
    body.put_u32(static_cast<std::uint32_t>(l.units));
    body.put_u32(static_cast<std::uint32_t>(l.projection));
  }
  body.put_u8(norms ? 1 : 0);

  // Per layer: w, r, p, b. Only weight matrices are quantized; biases keep
  // full precision.
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    const auto& lw = weights.layers[i];
    if (!lw.w.empty()) write_tensor(body, lw.w, quantize);
    if (!lw.r.empty()) write_tensor(body, lw.r, quantize);
    if (!lw.p.empty()) write_tensor(body, lw.p, quantize);
    if (!lw.b.empty()) write_tensor(body, lw.b, false);
  }
  if (norms) {
    auto write_vec = [&](const std::vector<float>& v) {
      MatF m(v.size(), 1, std::vector<float>(v));
      write_tensor(body, m, false);
    };
    write_vec(norms->input.mean);
    write_vec(norms->input.stdev);
    write_vec(norms->output.mean);
    write_vec(norms->output.stdev);
  }

  std::string out;
  out.append(kMagic, 4);
  ByteWriter ver;
  ver.put_u32(kVersion);
  out += ver.data();
  out += body.data();
  ByteWriter crc;
  crc.put_u32(crc32_of(body.data()));
  out += crc.data();
  return out;
}

ModelFile decode_model(std::span<const char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, "not a model file");
  ByteReader header(bytes.subspan(4));
  const std::uint32_t version = header.get_u32();
  if (version != kVersion)
    throw FormatError(FormatError::Kind::BadVersion,
                      "unsupported model version " + std::to_string(version));
  if (bytes.size() < 12)
    throw FormatError(FormatError::Kind::Truncated, "file too short");

  const std::span<const char> body = bytes.subspan(8, bytes.size() - 12);
  ByteReader crc_r(bytes.subspan(bytes.size() - 4));
  const std::uint32_t stored_crc = crc_r.get_u32();
  if (crc32_of(body) != stored_crc)
    throw FormatError(FormatError::Kind::ChecksumMismatch, "checksum mismatch");

  ByteReader r(body);
  ModelFile mf;
  mf.spec.input_dim = r.get_u32();
  mf.spec.frame_dim = r.get_u32();
  mf.spec.bundle_size = r.get_u32();
  const std::uint32_t n_layers = r.get_u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const std::uint8_t kind = r.get_u8();
    const std::uint8_t act = r.get_u8();
    if (kind > 2) throw FormatError(FormatError::Kind::Malformed, "unknown layer kind");
    if (act > 1) throw FormatError(FormatError::Kind::Malformed, "unknown activation");
    l.kind = static_cast<LayerKind>(kind);
    l.act = static_cast<Activation>(act);
    l.units = r.get_u32();
    l.projection = r.get_u32();
    mf.spec.layers.push_back(l);
  }
  const bool has_norms = r.get_u8() != 0;
  mf.spec.validate();

  const Weights shapes = zero_weights<float>(mf.spec);
  mf.weights.layers.resize(shapes.layers.size());
  auto read_into = [&](const MatF& shape, MatF& dst) {
    if (shape.empty()) return;
    dst = read_tensor(r, &mf.quantized);
    if (dst.rows != shape.rows || dst.cols != shape.cols)
      throw FormatError(FormatError::Kind::Malformed, "tensor shape mismatch");
  };
  for (std::size_t i = 0; i < shapes.layers.size(); ++i) {
    read_into(shapes.layers[i].w, mf.weights.layers[i].w);
    read_into(shapes.layers[i].r, mf.weights.layers[i].r);
    read_into(shapes.layers[i].p, mf.weights.layers[i].p);
    read_into(shapes.layers[i].b, mf.weights.layers[i].b);
  }
  if (has_norms) {
    ModelNorms n;
    n.input.mean = read_vec(r);
    n.input.stdev = read_vec(r);
    n.output.mean = read_vec(r);
    n.output.stdev = read_vec(r);
    mf.norms = std::move(n);
  }
  if (r.remaining() != 0)
    throw FormatError(FormatError::Kind::Malformed, "trailing bytes after tensors");
  return mf;
}

std::size_t save_model(const NetworkSpec& spec, const Weights& weights, bool quantize,
                       const std::filesystem::path& path,
                       const std::optional<ModelNorms>& norms) {
  const std::string bytes = encode_model(spec, weights, quantize, norms);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
  return bytes.size();
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace ltts
