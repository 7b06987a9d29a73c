#pragma once

// Model configuration and the trainable parameter set. Every weight lives in
// one flat vector; named blocks view into it so the optimizer, checkpoints and
// gradient checks all work on the same storage.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "causeptr/autodiff.hpp"
#include "causeptr/pos_tagger.hpp"

namespace causeptr {

/// Which span of a tuple is extracted first; the other span's pointer network
/// is conditioned on the first span's vector.
enum class Ordering { kCauseFirst, kEffectFirst };

std::string_view ordering_name(Ordering ordering);  // "CF" / "EF"
Ordering parse_ordering(std::string_view name);

enum class SpanRole { kCause = 0, kEffect = 1 };

inline SpanRole first_role(Ordering o) {
  return o == Ordering::kCauseFirst ? SpanRole::kCause : SpanRole::kEffect;
}
inline SpanRole second_role(Ordering o) {
  return o == Ordering::kCauseFirst ? SpanRole::kEffect : SpanRole::kCause;
}

struct EncoderConfig {
  int context_dim = 64;
  int pos_dim = 32;
  int vocab_size = 3;
  /// Run a bidirectional LSTM over the token embeddings.
  bool recurrent = true;
  /// Contextual vectors come from a precomputed file instead of embeddings.
  bool precomputed = false;

  int d_h() const { return context_dim + pos_dim; }
  void validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  Ordering ordering = Ordering::kCauseFirst;

  int d_h() const { return encoder.d_h(); }
  /// Pointer-network width, tied to d_h and split across two directions.
  int d_p() const { return encoder.d_h(); }
  void validate() const;
};

struct LstmBlocks {
  ad::ParamRef w_hh;  // 4h x h
  ad::ParamRef bias;  // 4h x 1
};

struct PointerBlocks {
  struct Direction {
    ad::ParamRef w_enc;   // 4h x d_h, applied to encoder rows
    ad::ParamRef w_dec;   // 4h x d_h, applied to the decoder hidden state
    ad::ParamRef w_cond;  // 4h x d_h, conditioning span; empty for the first head
    LstmBlocks lstm;
  };
  Direction forward;
  Direction backward;
  ad::ParamRef w_start;  // 1 x d_p
  ad::ParamRef w_end;    // 1 x d_p
};

struct ParamLayout {
  // Encoder.
  ad::ParamRef token_embedding;  // context_dim x vocab (absent when precomputed)
  ad::ParamRef pos_embedding;    // pos_dim x kPosTagCount
  struct EncoderDirection {
    ad::ParamRef w_x;  // 4h x context_dim
    LstmBlocks lstm;
  };
  EncoderDirection encoder_forward;   // present when recurrent
  EncoderDirection encoder_backward;
  // Additive attention.
  ad::ParamRef att_w_enc;  // d_h x d_h
  ad::ParamRef att_w_dec;  // d_h x d_h
  ad::ParamRef att_v;      // 1 x d_h
  // Decoder cell over [e_t ; y_avg].
  ad::ParamRef dec_w_x;  // 4 d_h x 2 d_h
  LstmBlocks decoder;
  // Pointer networks indexed by SpanRole.
  PointerBlocks pointer[2];
  // Projections.
  ad::ParamRef span_w;       // d_h x d_h
  ad::ParamRef span_b;       // d_h x 1
  ad::ParamRef causality_w;  // d_h x 2 d_h
  ad::ParamRef causality_b;  // d_h x 1
};

struct ParamBlock {
  std::string name;
  std::string group;
  ad::ParamRef ref;
};

class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-valued parameters laid out for config.
  explicit ModelParams(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::vector<std::string> groups() const;

  ad::Vector& values() { return values_; }
  const ad::Vector& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  Eigen::Map<ad::Matrix> block(const ad::ParamRef& ref) {
    return {values_.data() + ref.offset, ref.rows, ref.cols};
  }
  Eigen::Map<const ad::Matrix> block(const ad::ParamRef& ref) const {
    return {values_.data() + ref.offset, ref.rows, ref.cols};
  }
  const ParamBlock& find(std::string_view name) const;

  /// Embeddings uniform(-0.1, 0.1); weight matrices uniform(+-1/sqrt(fan_in));
  /// biases zero except the LSTM forget gates, which start at 1.
  void initialize(std::uint64_t seed);

  bool all_finite() const { return values_.allFinite(); }
  /// FNV-1a over the raw bytes of the flat vector.
  std::uint64_t checksum() const;

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::vector<ParamBlock> blocks_;
  ad::Vector values_;
};

struct CheckpointHeader {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::uint64_t seed = 0;
};

enum class CheckpointFormat { kText, kBinary };

/// Header lines "key value", a "data text|binary" line, then the flat vector
/// as %.17g decimals (one per line) or raw little-endian doubles.
void write_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                      const CheckpointHeader& header, CheckpointFormat format);
std::string checkpoint_bytes(const ModelParams& params, const CheckpointHeader& header,
                             CheckpointFormat format);

struct LoadedCheckpoint {
  CheckpointHeader header;
  ModelParams params;
};
LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint parse_checkpoint(std::string_view bytes);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace causeptr
