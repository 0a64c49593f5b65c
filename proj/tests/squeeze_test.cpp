#include <gtest/gtest.h>

#include "mlf/model.hpp"
#include "mlf/squeeze.hpp"
#include "mlf/train.hpp"
#include "test_util.hpp"

namespace mlf {
namespace {

using testing::random_tensor;

TEST(Squeeze, SixtyFourPatchesBySqueezeEightGivesEightTokens) {
  SqueezeConfig c{64, 8, 16};
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.tokens(), 8u);
  const Initializer init(1);
  PatchSqueeze sq("squeeze", 64, 8, init);
  std::mt19937_64 rng(1);
  EXPECT_EQ(sq(random_tensor({3, 64, 16}, rng, false)).shape(), (Shape{3, 8, 16}));
}

TEST(Squeeze, FactorValidation) {
  EXPECT_THROW((SqueezeConfig{64, 3, 16}.validate()), DimensionError);
  EXPECT_THROW((SqueezeConfig{12, 8, 16}.validate()), DimensionError);
  for (std::size_t r : {1, 2, 4, 8}) EXPECT_NO_THROW((SqueezeConfig{64, r, 16}.validate()));
}

TEST(Squeeze, IdentityEncoderPassesThrough) {
  const Initializer init(2);
  PatchSqueeze sq("squeeze", 6, 6, init);
  sq.set_identity();
  std::mt19937_64 rng(2);
  const auto x = random_tensor({2, 6, 4}, rng, false);
  const auto y = sq(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Squeeze, ZeroInputYieldsBiasBroadcast) {
  const Initializer init(3);
  PatchSqueeze sq("squeeze", 8, 4, init);
  const auto y = sq(Tensor::zeros({2, 8, 3}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t d = 0; d < 3; ++d)
        EXPECT_DOUBLE_EQ(y.at({b, t, d}), sq.encoder.bias.data()[t]);
  auto w = sq.encoder.bias.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (double v : testing::values(sq(Tensor::zeros({1, 8, 3})))) EXPECT_EQ(v, 0.0);
}

TEST(ConcatPeriods, TokenCountAndInverse) {
  std::mt19937_64 rng(4);
  std::vector<Tensor> blocks;
  for (int s = 0; s < 6; ++s) blocks.push_back(random_tensor({2, 8, 5}, rng, false));
  const auto z = concat_periods(blocks);
  EXPECT_EQ(z.dim(1), 48u);
  const auto parts = split_periods(z, std::vector<std::size_t>(6, 8));
  for (int s = 0; s < 6; ++s) {
    for (std::size_t i = 0; i < blocks[s].numel(); ++i)
      EXPECT_EQ(parts[s].data()[i], blocks[s].data()[i]);
  }
  const auto single = concat_periods({blocks[0]});
  EXPECT_EQ(single.shape(), blocks[0].shape());
  for (std::size_t i = 0; i < single.numel(); ++i) EXPECT_EQ(single.data()[i], blocks[0].data()[i]);
}

TEST(Decoder, OutputMatchesRawPatchShape) {
  const Initializer init(5);
  std::mt19937_64 rng(5);
  for (std::size_t l : {2, 4, 64}) {
    PatchDecoder dec("dec", 8, 64, 16, l, init);
    EXPECT_EQ(dec(random_tensor({3, 8, 16}, rng, false)).shape(), (Shape{3, 64, l}));
  }
}

TEST(Decoder, OverfitsSingleInputWithoutSqueezing) {
  const Initializer init(6);
  std::mt19937_64 rng(6);
  const std::size_t n = 8, d = 16, l = 4;
  const auto x = random_tensor({1, n, d}, rng, false);
  const auto target = random_tensor({1, n, l}, rng, false);
  PatchSqueeze sq("sq", n, n, init);
  sq.set_identity();
  PatchDecoder dec("dec", n, n, d, l, init);
  std::vector<Tensor> params;
  ParamVisitor collect = [&](const std::string&, Tensor& p) { params.push_back(p); };
  sq.visit(collect);
  dec.visit(collect);
  Adam opt(params, {.learning_rate = 1e-3});
  double loss = 0.0;
  for (int step = 0; step < 2000; ++step) {
    opt.zero_grad();
    const auto l_t = reconstruction_loss({dec(sq(x))}, {target});
    loss = l_t.item();
    if (loss < 1e-4) break;
    l_t.backward();
    opt.step();
  }
  EXPECT_LT(loss, 1e-4);
}

TEST(Decoder, ReconstructionGradientWrtEncoderMatchesFiniteDifferences) {
  const Initializer init(7);
  std::mt19937_64 rng(7);
  PatchSqueeze sq("sq", 8, 4, init);
  PatchDecoder dec("dec", 4, 8, 3, 2, init);
  const auto x = random_tensor({2, 8, 3}, rng, false);
  const auto target = random_tensor({2, 8, 2}, rng, false);
  const auto r = grad_check([&] { return reconstruction_loss({dec(sq(x))}, {target}); },
                            {{"enc.weight", sq.encoder.weight}, {"enc.bias", sq.encoder.bias}});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(ReconstructionLoss, PerfectIsZero) {
  std::mt19937_64 rng(8);
  const auto a = random_tensor({2, 4, 2}, rng, false);
  EXPECT_EQ(reconstruction_loss({a}, {a}).item(), 0.0);
}

TEST(ReconstructionLoss, MeanOverPeriods) {
  // per-period MSE 2 and 4
  const auto a = Tensor::from({1, 1, 2}, {0, 0});
  const auto b = Tensor::from({1, 1, 2}, {std::sqrt(2.0), -std::sqrt(2.0)});
  const auto c = Tensor::from({1, 2, 1}, {0, 0});
  const auto d = Tensor::from({1, 2, 1}, {2, -2});
  EXPECT_NEAR(reconstruction_loss({a, c}, {b, d}).item(), 3.0, 1e-15);
}

MlfConfig small_config(std::size_t periods) {
  MlfConfig c;
  c.period_lengths.clear();
  for (std::size_t s = 0; s < periods; ++s) c.period_lengths.push_back(8u << s);
  c.horizon = 2;
  c.patch_count = 8;
  c.squeeze_factor = 2;
  c.d_model = 4;
  c.n_heads = 2;
  c.n_blocks = 1;
  c.conv_filters = 2;
  return c;
}

std::size_t squeeze_parameter_count(MlfModel& m) {
  std::size_t n = 0;
  m.visit([&](const std::string& name, Tensor& p) {
    if (name.rfind("squeeze.", 0) == 0) n += p.numel();
  });
  return n;
}

TEST(Squeeze, SharedEncoderSizeIndependentOfPeriodCount) {
  MlfModel one(small_config(1), 1), three(small_config(3), 1);
  EXPECT_GT(squeeze_parameter_count(one), 0u);
  EXPECT_EQ(squeeze_parameter_count(one), squeeze_parameter_count(three));
}

TEST(Squeeze, ScoreMatrixShrinksQuadratically) {
  for (std::size_t r : {1, 8}) {
    auto c = small_config(2);
    c.patch_count = 64;
    c.period_lengths = {64, 128};
    c.squeeze_factor = r;
    MlfModel m(c, 1);
    EXPECT_EQ(m.total_tokens(), 2 * 64 / r);
  }
  EXPECT_EQ((128u * 128u) / (16u * 16u), 64u);
}

}  // namespace
}  // namespace mlf
