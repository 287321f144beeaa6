#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "ltts/mat.hpp"
#include "ltts/network.hpp"
#include "ltts/normalize.hpp"

namespace ltts {

// Symmetric per-tensor 8-bit quantization: w ~ q * scale with q in [-127, 127].
struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  float scale = 1.0f;
  std::vector<std::int8_t> q;
};

// scale = max|m| / 127 (1 for an all-zero tensor); q = round(w / scale) with
// ties away from zero, clamped to [-127, 127].
QuantizedTensor quantize_tensor(const MatF& m);

// w = q * scale, in 32-bit floats.
MatF dequantize_tensor(const QuantizedTensor& t);

struct ModelFile {
  NetworkSpec spec;
  Weights weights;
  bool quantized = false;
  std::optional<ModelNorms> norms;
};

// Model container, all multi-byte integers little-endian:
//   [magic "LTTS"][version u32][spec header][tensor records][crc32 u32]
// Weight matrices are stored int8 when `quantize` is set; biases and
// normalizer stats always stay raw 32-bit. The CRC-32 covers every byte
// between the version field and the checksum itself.
std::size_t save_model(const NetworkSpec& spec, const Weights& weights, bool quantize,
                       const std::filesystem::path& path,
                       const std::optional<ModelNorms>& norms = std::nullopt);

ModelFile load_model(const std::filesystem::path& path);

// In-memory encode/decode of the same byte layout.
std::string encode_model(const NetworkSpec& spec, const Weights& weights, bool quantize,
                         const std::optional<ModelNorms>& norms = std::nullopt);
ModelFile decode_model(std::span<const char> bytes);

}  // namespace ltts
