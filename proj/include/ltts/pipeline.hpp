#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ltts/mat.hpp"
#include "ltts/network.hpp"
#include "ltts/normalize.hpp"

namespace ltts {

// Layout of one acoustic frame: mel-cepstrum, band aperiodicities, log F0,
// voicing flag.
struct FeatureLayout {
  std::size_t mcep = 40;
  std::size_t bap = 7;

  std::size_t dim() const { return mcep + bap + 2; }
  std::size_t lf0_index() const { return mcep + bap; }
  std::size_t vuv_index() const { return mcep + bap + 1; }
  bool voiced(std::span<const float> frame) const { return frame[vuv_index()] > 0.5f; }
};

// Per-phoneme durations from the duration model: one network step per
// phoneme, output denormalized, clamped to >= 1 and rounded to whole frames.
// `phoneme_feats` is raw (unnormalized); pass norms = nullptr for a model
// trained on raw features.
std::vector<std::uint32_t> predict_durations(const NetworkSpec& spec, const Weights& w,
                                             const ModelNorms* norms,
                                             const MatF& phoneme_feats);

// Repeats each phoneme vector for its duration and appends two position
// features: fractional position i/dur in [0,1) and remaining fraction
// (dur-i)/dur in (0,1].
MatF upsample(const MatF& phoneme_feats, const std::vector<std::uint32_t>& durations);

// Pull-based access to frame-level linguistic inputs. Implementations may
// record reads; the synthesis loop requests exactly one frame per network
// step (the last real frame of the current bundle), never a later one.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t frames() const = 0;
  virtual std::span<const float> frame(std::size_t t) = 0;
};

// FrameSource over a matrix; records every requested index in order.
class MatFrameSource : public FrameSource {
 public:
  explicit MatFrameSource(const MatF& m) : m_(&m) {}
  std::size_t frames() const override { return m_->rows; }
  std::span<const float> frame(std::size_t t) override {
    reads_.push_back(t);
    return m_->row(t);
  }
  const std::vector<std::size_t>& reads() const { return reads_; }

 private:
  const MatF* m_;
  std::vector<std::size_t> reads_;
};

struct StreamReport {
  std::size_t frames = 0;
  std::size_t network_steps = 0;
  std::size_t steps_to_first_chunk = 0;
  std::size_t chunks = 0;
  double first_chunk_ms = 0.0;
  double total_ms = 0.0;
};

struct SynthesisResult {
  MatF frames;                          // frame_count x d, denormalized
  std::vector<std::size_t> chunk_sizes; // emission grouping, sums to frame_count
  StreamReport report;
};

// Frame-synchronous synthesis: consumes inputs bundle-by-bundle (network
// input = last real frame of each bundle, trailing partial bundle padded by
// repeating the final frame and surplus outputs dropped), emits frames in
// chunks of chunk_size and records time to first chunk plus total time.
// Output frame count equals source.frames() exactly. chunk_size affects only
// emission grouping and timing probes, never frame values. When a layout is
// given the voicing flag is clamped to [0, 1] after denormalization.
SynthesisResult synthesize_stream(const NetworkSpec& spec, const Weights& w,
                                  const ModelNorms* norms, FrameSource& source,
                                  std::size_t chunk_size,
                                  const FeatureLayout* layout = nullptr);

enum class FeatureFormat { Binary, Text };

// Feature file writer/reader. Binary layout, little-endian:
//   [magic "AFRM"][version:u32][frame_count:u32][dim:u32][row-major f32 data]
// Text: a "frames=N dim=D" header line then one whitespace-separated row per
// line, printed with enough digits that reading restores floats bit-exactly.
// The reader auto-detects which of the two formats it is given.
std::size_t emit_features(const MatF& frames, const std::string& path, FeatureFormat fmt);
MatF read_features(const std::string& path);

}  // namespace ltts
