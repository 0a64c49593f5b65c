#include <gtest/gtest.h>

#include <cmath>

#include "mlf/grad_check.hpp"
#include "mlf/model.hpp"
#include "test_util.hpp"
#include "toy.hpp"

namespace mlf {
namespace {

using testing::pointers;
using testing::toy_config;
using testing::trend_windows;

void zero_all(MlfModel& m) {
  m.visit([](const std::string&, Tensor& p) {
    auto d = p.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  });
}

TEST(Forward, ZeroModelForecastsZero) {
  auto c = toy_config();
  MlfModel m(c, 1);
  zero_all(m);
  const auto w = trend_windows(c, 5);
  const auto bundle = m.forward(m.make_batch(pointers(w)), true);
  for (double v : bundle.forecast.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, SmallestDegenerateConfig) {
  MlfConfig c = toy_config();
  c.period_lengths = {6};
  c.patch_count = 3;
  c.squeeze_factor = 1;
  c.n_blocks = 1;
  MlfModel m(c, 2);
  const auto w = trend_windows(c, 3);
  const auto bundle = m.forward(m.make_batch(pointers(w)), true);
  EXPECT_EQ(bundle.forecast.shape(), (Shape{3, 2}));
}

TEST(Forward, FullConfigShapeTrace) {
  MlfConfig c;  // S=6, 64 patches, r=8, E=3
  c.horizon = 5;
  MlfModel m(c, 3);
  EXPECT_EQ(m.total_tokens(), 48u);
  const auto w = trend_windows(c, 2);
  const auto bundle = m.forward(m.make_batch(pointers(w)), false);
  EXPECT_EQ(bundle.forecast.shape(), (Shape{2, 5}));
  EXPECT_EQ(bundle.tokens, 48u);
  ASSERT_EQ(bundle.block_forecasts.size(), 3u);
  for (const auto& block : bundle.block_forecasts) {
    ASSERT_EQ(block.size(), 6u);
    for (const auto& f : block) EXPECT_EQ(f.shape(), (Shape{2, 5}));
  }
  ASSERT_EQ(bundle.attention.size(), 3u);
  EXPECT_EQ(bundle.attention[0].shape(), (Shape{2 * 4, 48, 48}));
  EXPECT_EQ(bundle.weights.shape(), (Shape{2, 6, 5}));
  for (std::size_t s = 0; s < 6; ++s) {
    EXPECT_EQ(bundle.reconstructions[s].shape(),
              (Shape{2, 64, m.patch_params()[s].patch_length}));
  }
}

TEST(Loss, PerfectForecastAndReconstructionIsZero) {
  // feed the model's own outputs back as targets
  auto c = toy_config();
  MlfModel m(c, 4);
  const auto w = trend_windows(c, 3);
  auto batch = m.make_batch(pointers(w));
  const auto bundle = m.forward(batch, false);
  batch.target = bundle.forecast.detach();
  for (std::size_t s = 0; s < batch.patches.size(); ++s)
    batch.patches[s] = bundle.reconstructions[s].detach();
  EXPECT_EQ(mlf_loss(bundle, batch, c.ablation).total.item(), 0.0);
}

TEST(Loss, ForecastPlusMeanReconstruction) {
  ForecastBundle bundle;
  Batch batch;
  bundle.forecast = Tensor::from({1, 1}, {1.0});
  batch.target = Tensor::from({1, 1}, {0.0});
  bundle.reconstructions = {Tensor::from({1, 1, 1}, {std::sqrt(2.0)}),
                            Tensor::from({1, 1, 1}, {2.0})};
  batch.patches = {Tensor::from({1, 1, 1}, {0.0}), Tensor::from({1, 1, 1}, {0.0})};
  AblationFlags flags;
  const auto loss = mlf_loss(bundle, batch, flags);
  EXPECT_NEAR(loss.total.item(), 4.0, 1e-14);
  EXPECT_NEAR(loss.forecast.item() + loss.reconstruction.item(), loss.total.item(), 1e-15);
  flags.reconstruction_loss = false;
  EXPECT_NEAR(mlf_loss(bundle, batch, flags).total.item(), 1.0, 1e-15);
}

TEST(Loss, EndToEndGradientCheckOnToyConfig) {
  auto c = toy_config();
  MlfModel m(c, 5);
  const auto w = trend_windows(c, 6, 0.3);
  const auto batch = m.make_batch(pointers(w));
  const auto report = grad_check(
      [&] { return mlf_loss(m.forward(batch, true), batch, c.ablation).total; },
      m.named_parameters(), {.step = 1e-5, .tol = 1e-4});
  EXPECT_TRUE(report.passed) << "max rel err " << report.max_rel_error << " at "
                             << (report.worst.empty() ? "" : report.worst[0].name);
  EXPECT_EQ(report.checked, m.parameter_count());
}

TEST(Ablation, WithoutIrfChangesOutputs) {
  auto c = toy_config();
  MlfModel full(c, 6);
  c.ablation.irf = false;
  MlfModel no_irf(c, 6);
  const auto w = trend_windows(c, 4, 0.5);
  const auto a = full.forward(full.make_batch(pointers(w)), false).forecast;
  const auto b = no_irf.forward(no_irf.make_batch(pointers(w)), false).forecast;
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(Ablation, WithoutLwiUsesPlainMean) {
  auto c = toy_config();
  c.ablation.lwi = false;
  MlfModel m(c, 7);
  const auto w = trend_windows(c, 4, 0.5);
  const auto bundle = m.forward(m.make_batch(pointers(w)), false);
  EXPECT_FALSE(bundle.weights.defined());
  const auto mean = integrate_mean(bundle.period_forecasts);
  for (std::size_t i = 0; i < mean.numel(); ++i)
    EXPECT_DOUBLE_EQ(bundle.forecast.data()[i], mean.data()[i]);
}

TEST(Ablation, VariantsShareInitialValues) {
  auto c = toy_config();
  MlfModel full(c, 8);
  c.ablation.lwi = false;
  MlfModel no_lwi(c, 8);
  const auto a = full.named_parameters();
  for (const auto& [name, p] : no_lwi.named_parameters()) {
    for (const auto& [other, q] : a) {
      if (other == name) {
        EXPECT_TRUE(std::equal(p.data().begin(), p.data().end(), q.data().begin()));
      }
    }
  }
}

TEST(Ablation, FixedPatchingRunsWithUnequalTokenCounts) {
  auto c = toy_config();
  c.period_lengths = {8, 40};
  c.fixed_patch_length = 4;
  c.fixed_patch_stride = 2;
  c.ablation.map = false;
  MlfModel m(c, 9);
  EXPECT_LT(m.period_tokens()[0], m.period_tokens()[1]);
  const auto w = trend_windows(c, 3);
  const auto batch = m.make_batch(pointers(w));
  const auto bundle = m.forward(batch, true);
  EXPECT_EQ(bundle.forecast.shape(), (Shape{3, 2}));
  const auto report = grad_check(
      [&] { return mlf_loss(m.forward(batch, true), batch, c.ablation).total; },
      m.named_parameters());
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Config, ValidationNamesField) {
  auto c = toy_config();
  c.squeeze_factor = 3;
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("squeeze_factor"), std::string::npos) << e.what();
  }
  c = toy_config();
  c.d_model = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = toy_config();
  c.period_lengths = {8, 4};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Snapshot, RestoreRoundTrip) {
  auto c = toy_config();
  MlfModel m(c, 10);
  const auto snap = m.snapshot();
  zero_all(m);
  m.restore(snap);
  EXPECT_EQ(m.snapshot().params, snap.params);
}

}  // namespace
}  // namespace mlf
