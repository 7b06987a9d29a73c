#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "causeptr/error.hpp"
#include "causeptr/model.hpp"

using namespace causeptr;

namespace {

ModelConfig small_config(bool recurrent = true, bool precomputed = false) {
  ModelConfig c;
  c.encoder.context_dim = 6;
  c.encoder.pos_dim = 4;
  c.encoder.vocab_size = 11;
  c.encoder.recurrent = recurrent;
  c.encoder.precomputed = precomputed;
  return c;
}

}  // namespace

TEST(Model, LayoutCoversFlatVectorWithoutGaps) {
  const ModelParams p(small_config());
  std::vector<int> cover(p.size(), 0);
  for (const auto& b : p.blocks()) {
    for (std::size_t i = 0; i < b.ref.size(); ++i) ++cover[b.ref.offset + i];
  }
  for (int c : cover) EXPECT_EQ(c, 1);
}

TEST(Model, EveryGroupPresent) {
  const ModelParams p(small_config());
  const std::vector<std::string> want = {"embeddings", "pos_embeddings", "encoder_recurrent", "attention",
                                         "decoder_cell", "cause_pointer", "effect_pointer",
                                         "span_projection", "causality_projection"};
  const auto groups = p.groups();
  for (const auto& g : want) {
    EXPECT_NE(std::find(groups.begin(), groups.end(), g), groups.end()) << g;
  }
}

TEST(Model, ConditioningBlocksOnlyOnSecondRole) {
  ModelConfig cf = small_config();
  const ModelParams a(cf);
  EXPECT_EQ(a.layout().pointer[0].forward.w_cond.size(), 0u);
  EXPECT_GT(a.layout().pointer[1].forward.w_cond.size(), 0u);
  cf.ordering = Ordering::kEffectFirst;
  const ModelParams b(cf);
  EXPECT_GT(b.layout().pointer[0].forward.w_cond.size(), 0u);
  EXPECT_EQ(b.layout().pointer[1].forward.w_cond.size(), 0u);
}

TEST(Model, OptionalEncoderBlocks) {
  const ModelParams plain(small_config(false));
  EXPECT_EQ(plain.layout().encoder_forward.w_x.size(), 0u);
  const ModelParams pre(small_config(true, true));
  EXPECT_EQ(pre.layout().token_embedding.size(), 0u);
  EXPECT_EQ(pre.layout().encoder_forward.w_x.size(), 0u);
}

TEST(Model, OddPointerWidthRejected) {
  ModelConfig c = small_config();
  c.encoder.pos_dim = 3;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Model, InitializationRangesAndForgetBias) {
  ModelParams p(small_config());
  p.initialize(5);
  EXPECT_TRUE(p.all_finite());
  const auto emb = p.block(p.layout().token_embedding);
  EXPECT_LE(emb.cwiseAbs().maxCoeff(), 0.1);
  const auto w = p.block(p.layout().att_w_enc);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(10.0));
  const auto bias = p.block(p.layout().decoder.bias);
  const int d = 10;
  for (int i = 0; i < 4 * d; ++i) EXPECT_EQ(bias(i, 0), (i >= d && i < 2 * d) ? 1.0 : 0.0);
}

TEST(Model, InitializationDeterministic) {
  ModelParams a(small_config()), b(small_config()), c(small_config());
  a.initialize(5);
  b.initialize(5);
  c.initialize(6);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), c.checksum());
}

TEST(Checkpoint, TextAndBinaryRoundTripBitwise) {
  ModelParams p(small_config());
  p.initialize(7);
  const CheckpointHeader header{p.config(), 0xdeadbeefULL, 7};
  for (auto format : {CheckpointFormat::kText, CheckpointFormat::kBinary}) {
    const LoadedCheckpoint back = parse_checkpoint(checkpoint_bytes(p, header, format));
    EXPECT_EQ(back.params.checksum(), p.checksum());
    EXPECT_EQ(back.header.vocab_hash, 0xdeadbeefULL);
    EXPECT_EQ(back.header.seed, 7u);
    EXPECT_EQ(back.params.config().d_h(), 10);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  ModelParams p(small_config());
  p.initialize(8);
  const auto path = std::filesystem::temp_directory_path() / "causeptr_model_test.ckpt";
  write_checkpoint(path, p, {p.config(), 1, 8}, CheckpointFormat::kBinary);
  EXPECT_EQ(read_checkpoint(path).params.checksum(), p.checksum());
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptInputRejected) {
  ModelParams p(small_config());
  p.initialize(9);
  std::string bytes = checkpoint_bytes(p, {p.config(), 1, 9}, CheckpointFormat::kText);
  EXPECT_THROW(parse_checkpoint("not a checkpoint"), Error);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() / 2)), Error);
}
