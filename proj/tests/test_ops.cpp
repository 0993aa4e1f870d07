#include "support/gradchecks.hpp"

#include <gtest/gtest.h>

using namespace disfluent;

namespace {

constexpr int kSeeds = 20;

void expect_all_seeds(const std::function<oracle::GradCheckReport(std::uint64_t)>& run) {
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto r = run(static_cast<std::uint64_t>(seed));
    EXPECT_TRUE(r.ok) << "seed " << seed << ": " << r.worst << " (ratio " << r.worst_ratio << ")";
    EXPECT_GT(r.checked, 0u);
  }
}

}  // namespace

TEST(GradCheck, Conv2d) { expect_all_seeds(gradcases::conv2d_case); }
TEST(GradCheck, BatchNormTrain) {
  expect_all_seeds([](std::uint64_t s) { return gradcases::batch_norm_case(s, Mode::Train); });
}
TEST(GradCheck, BatchNormEval) {
  expect_all_seeds([](std::uint64_t s) { return gradcases::batch_norm_case(s, Mode::Eval); });
}
TEST(GradCheck, Relu) { expect_all_seeds(gradcases::relu_case); }
TEST(GradCheck, Dense) { expect_all_seeds(gradcases::linear_case); }
TEST(GradCheck, LstmStep) { expect_all_seeds(gradcases::lstm_step_case); }
TEST(GradCheck, BiLstmLayer) { expect_all_seeds(gradcases::bilstm_case); }
TEST(GradCheck, SoftmaxCrossEntropy) { expect_all_seeds(gradcases::softmax_ce_case); }
TEST(GradCheck, MiniatureModelEndToEnd) {
  expect_all_seeds([](std::uint64_t s) { return gradcases::end_to_end_case(s); });
}
TEST(GradCheck, MiniatureModelFloatMatchesDouble) { expect_all_seeds(gradcases::float_matches_double_case); }

TEST(GradCheck, ReshapingAndElementwiseOps) {
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto fm = oracle::random_tensor<double>({2, 3, 2, 4}, rng);
    auto other = oracle::random_tensor<double>({2, 4, 6}, rng);
    auto r = oracle::random_tensor<double>({2, 4}, rng, 1.0, false);
    auto loss = [&](Graph<double>& g) {
      auto seq = feature_map_to_sequence(g, fm);                 // (2,4,6)
      auto mixed = add(g, mul(g, seq, other), seq);              // (2,4,6)
      auto ends = sequence_endpoints(g, mixed);                  // (2,6)
      auto kept = slice_last(g, ends, 1, 4);                     // (2,4)
      return oracle::project(g, dropout(g, kept, 0.3, Mode::Train, seed), r);
    };
    const auto rep = oracle::gradcheck<double>(loss, {{"feature_map", fm}, {"other", other}}, rng);
    EXPECT_TRUE(rep.ok) << "seed " << seed << ": " << rep.worst;
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  // The checker itself must fail when the analytic gradient is off.
  std::mt19937_64 rng(1);
  auto x = oracle::random_tensor<double>({4}, rng);
  auto loss = [&](Graph<double>& g) {
    auto y = mul(g, x, x);
    if (!g.enabled()) return sum(g, add(g, y, y));  // numeric sees 2 sum(x^2)
    return sum(g, y);                                // analytic sees sum(x^2)
  };
  EXPECT_FALSE(oracle::gradcheck<double>(loss, {{"x", x}}, rng).ok);
}
