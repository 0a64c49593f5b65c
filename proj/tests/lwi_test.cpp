#include <gtest/gtest.h>

#include <cmath>

#include "mlf/lwi.hpp"
#include "test_util.hpp"

namespace mlf {
namespace {

using testing::random_tensor;

void zero(Tensor& t) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
}

TEST(Lwi, FeatureLength) {
  const Initializer init(1);
  Lwi lwi("lwi", 3, 4, 21, 5, init);
  std::mt19937_64 rng(1);
  const auto nu = lwi.extract_features(random_tensor({2, 21}, rng, false), true);
  EXPECT_EQ(nu.shape(), (Shape{2, 5 * 10}));
  EXPECT_EQ(lwi.feature_length(), 50u);
}

TEST(Lwi, ZeroConvolutionGivesHalfWeights) {
  const Initializer init(2);
  Lwi lwi("lwi", 3, 4, 16, 4, init);
  zero(lwi.features.conv_weight);
  std::mt19937_64 rng(2);
  const auto nu = lwi.extract_features(random_tensor({2, 16}, rng, false), false);
  for (double v : nu.data()) EXPECT_EQ(v, 0.0);
  const auto att = lwi.period_weights(nu);
  // nu = 0 leaves tanh(b1) * tanh(b2); zero the biases for the pure case
  zero(lwi.branch_a.bias);
  zero(lwi.branch_b.bias);
  for (double v : testing::values(lwi.period_weights(nu))) EXPECT_EQ(v, 0.5);
  EXPECT_EQ(att.shape(), (Shape{2, 3, 4}));
}

TEST(Lwi, ZeroParametersGiveHalf) {
  const Initializer init(3);
  Lwi lwi("lwi", 2, 3, 8, 2, init);
  for (Linear* l : {&lwi.branch_a, &lwi.branch_b}) {
    zero(l->weight);
    zero(l->bias);
  }
  std::mt19937_64 rng(3);
  const auto att = lwi.period_weights(random_tensor({4, lwi.feature_length()}, rng, false));
  for (double v : att.data())
    EXPECT_EQ(v, 0.5);
}

TEST(Lwi, WeightsStayInsideSigmoidBand) {
  const Initializer init(4);
  Lwi lwi("lwi", 3, 5, 32, 4, init);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto nu = random_tensor({8, lwi.feature_length()}, rng, false, -50, 50);
    for (double v : testing::values(lwi.period_weights(nu))) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      EXPECT_GT(v, 0.2689);
      EXPECT_LT(v, 0.7311);
    }
  }
}

TEST(Lwi, FeatureExtractorGradientMatchesFiniteDifferences) {
  const Initializer init(5);
  Lwi lwi("lwi", 2, 2, 10, 3, init);
  std::mt19937_64 rng(5);
  const auto x = random_tensor({4, 10}, rng, false);
  const auto w = random_tensor({4, lwi.feature_length()}, rng, false);
  std::vector<std::pair<std::string, Tensor>> params;
  lwi.visit([&](const std::string& name, Tensor& p) {
    if (name.find("theta") == std::string::npos) params.emplace_back(name, p);
  });
  ASSERT_EQ(params.size(), 3u);
  const auto r = grad_check([&] { return testing::probe(lwi.extract_features(x, true), w); }, params);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Lwi, WeightsGradientMatchesFiniteDifferences) {
  const Initializer init(6);
  Lwi lwi("lwi", 2, 3, 10, 3, init);
  std::mt19937_64 rng(6);
  const auto x = random_tensor({4, 10}, rng, false);
  const auto w = random_tensor({4, 2, 3}, rng, false);
  std::vector<std::pair<std::string, Tensor>> params;
  lwi.visit([&](const std::string& name, Tensor& p) { params.emplace_back(name, p); });
  const auto r = grad_check(
      [&] { return testing::probe(lwi.period_weights(lwi.extract_features(x, true)), w); },
      params);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Integrate, Examples) {
  const auto a = Tensor::from({1, 1}, {2.0}), b = Tensor::from({1, 1}, {4.0});
  EXPECT_EQ(integrate({a, b}, Tensor::from({1, 2, 1}, {1, 1})).item(), 3.0);
  EXPECT_EQ(integrate({a, b}, Tensor::from({1, 2, 1}, {0, 1})).item(), 2.0);
  EXPECT_EQ(integrate({a, b}, Tensor::from({1, 2, 1}, {0.5, 0.5})).item(),
            0.5 * integrate_mean({a, b}).item());
}

TEST(Integrate, LinearInForecasts) {
  std::mt19937_64 rng(7);
  const auto att = random_tensor({3, 2, 4}, rng, false, 0.3, 0.7);
  std::vector<Tensor> f, g, fg;
  for (int s = 0; s < 2; ++s) {
    f.push_back(random_tensor({3, 4}, rng, false));
    g.push_back(random_tensor({3, 4}, rng, false));
    fg.push_back(add(scale(f.back(), 2.0), scale(g.back(), -0.5)));
  }
  const auto lhs = integrate(fg, att);
  const auto rhs = add(scale(integrate(f, att), 2.0), scale(integrate(g, att), -0.5));
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs.data()[i], rhs.data()[i], 1e-14);
}

TEST(Integrate, DiffersFromMeanForNonConstantWeights) {
  const auto a = Tensor::from({1, 2}, {1, 2}), b = Tensor::from({1, 2}, {5, -1});
  const auto weighted = integrate({a, b}, Tensor::from({1, 2, 2}, {0.3, 0.6, 0.7, 0.4}));
  const auto plain = integrate_mean({a, b});
  EXPECT_NE(weighted.data()[0], plain.data()[0]);
}

}  // namespace
}  // namespace mlf
