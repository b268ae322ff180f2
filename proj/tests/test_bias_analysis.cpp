#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "procal/bias_analysis.hpp"
#include "procal/error.hpp"
#include "procal/parallel.hpp"
#include "test_support.hpp"

namespace procal {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kIo;
}

TEST(ProximityGroups, OnePerGroup) {
  const std::vector<double> p = {0.3, 0.1, 0.5, 0.2, 0.4};
  EXPECT_EQ(proximity_groups(p, 5), (std::vector<std::size_t>{2, 0, 4, 1, 3}));
}

TEST(ProximityGroups, TiesKeepInputOrder) {
  const std::vector<double> p(12, 0.5);
  const auto g = proximity_groups(p, 5);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
  std::vector<std::size_t> sizes(5, 0);
  for (auto x : g) ++sizes[x];
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
}

TEST(ProximityGroups, MatchSortedQuantiles) {
  std::mt19937_64 rng(1);
  std::vector<double> p(1000);
  for (auto& v : p) v = testing::uniform(rng);
  const auto g = proximity_groups(p, 5);
  auto sorted = p;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> sizes(5, 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    ++sizes[g[i]];
    const auto rank = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), p[i]) - sorted.begin());
    EXPECT_EQ(g[i], rank / 200);
  }
  for (auto s : sizes) {
    EXPECT_GE(s, 199u);
    EXPECT_LE(s, 201u);
  }
  EXPECT_EQ(code_of([&] { proximity_groups(std::span(p).first(3), 5); }), ErrorCode::kInsufficientData);
}

TEST(ConfidenceMatch, IdenticalDistributions) {
  std::mt19937_64 rng(2);
  std::vector<double> c(300);
  for (auto& v : c) v = testing::uniform(rng, 0.3, 1.0);
  const std::vector<std::uint8_t> y(300, 1);
  const auto m = confidence_match({c, y}, {c, y}, 10000, 0.05, 7);
  EXPECT_EQ(m.rejected_count, 0u);
  EXPECT_EQ(m.pairs(), 600u);
  EXPECT_NEAR(m.mean_conf_high, m.mean_conf_low, 1e-9);
  for (std::size_t i = 0; i < m.pairs(); ++i) EXPECT_EQ(c[m.high[i]], c[m.low[i]]);
}

TEST(ConfidenceMatch, NoOverlapIsAnError) {
  const std::vector<double> hi(50, 0.99), lo(50, 0.50);
  const std::vector<std::uint8_t> y(50, 1);
  try {
    confidence_match({hi, y}, {lo, y});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoConfidenceOverlap);
    EXPECT_NE(std::string(e.what()).find("--groups"), std::string::npos);
  }
}

double nearest_gap(double c, std::span<const double> targets) {
  double best = std::numeric_limits<double>::infinity();
  for (double t : targets) best = std::min(best, std::abs(c - t));
  return best;
}

TEST(ConfidenceMatch, AgreesWithExhaustiveMatching) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t nh = 1 + testing::uniform_int(rng, 20), nl = 1 + testing::uniform_int(rng, 20);
    std::vector<double> ch(nh), cl(nl);
    // Coarse grid so both exact ties and rejections occur.
    for (auto& v : ch) v = std::round(testing::uniform(rng, 0.4, 1.0) * 40.0) / 40.0;
    for (auto& v : cl) v = std::round(testing::uniform(rng, 0.3, 0.9) * 40.0) / 40.0;
    const std::vector<std::uint8_t> yh(nh, 1), yl(nl, 0);

    std::vector<double> want_gaps;
    std::size_t want_rejected = 0;
    for (double c : ch) {
      const double g = nearest_gap(c, cl);
      g <= 0.05 ? want_gaps.push_back(g) : void(++want_rejected);
    }
    for (double c : cl) {
      const double g = nearest_gap(c, ch);
      g <= 0.05 ? want_gaps.push_back(g) : void(++want_rejected);
    }
    if (want_gaps.empty()) {
      EXPECT_EQ(code_of([&] { confidence_match({ch, yh}, {cl, yl}, 10000, 0.05, trial); }),
                ErrorCode::kNoConfidenceOverlap);
      continue;
    }
    const auto m = confidence_match({ch, yh}, {cl, yl}, 10000, 0.05, static_cast<std::uint64_t>(trial));
    EXPECT_EQ(m.rejected_count, want_rejected);
    std::vector<double> got_gaps;
    for (std::size_t i = 0; i < m.pairs(); ++i) {
      const double g = std::abs(ch[m.high[i]] - cl[m.low[i]]);
      got_gaps.push_back(g);
      EXPECT_TRUE(g == nearest_gap(ch[m.high[i]], cl) || g == nearest_gap(cl[m.low[i]], ch));
      EXPECT_LE(g, 0.05);
    }
    std::sort(want_gaps.begin(), want_gaps.end());
    std::sort(got_gaps.begin(), got_gaps.end());
    EXPECT_EQ(got_gaps, want_gaps);
    EXPECT_LE(std::abs(m.mean_conf_high - m.mean_conf_low), 0.05 + 1e-12);
  }
}

TEST(ConfidenceMatch, DrawsAreCappedAndDeterministic) {
  std::mt19937_64 rng(4);
  std::vector<double> ch(500), cl(800);
  for (auto& v : ch) v = testing::uniform(rng);
  for (auto& v : cl) v = testing::uniform(rng);
  const std::vector<std::uint8_t> yh(500, 1), yl(800, 1);
  const auto a = confidence_match({ch, yh}, {cl, yl}, 600, 0.05, 99);
  const auto b = confidence_match({ch, yh}, {cl, yl}, 600, 0.05, 99);
  EXPECT_EQ(a.pairs() + a.rejected_count, 500u + 600u);
  EXPECT_EQ(a.high, b.high);
  EXPECT_EQ(a.low, b.low);
  const auto c = confidence_match({ch, yh}, {cl, yl}, 600, 0.05, 100);
  EXPECT_NE(a.high, c.high);
}

TEST(RankSum, IdenticalSamples) {
  const std::vector<double> a = {0, 1, 1, 0, 1, 1, 1, 0, 1, 1, 0, 1};
  const auto r = wilcoxon_rank_sum(a, a);
  EXPECT_NEAR(r.p_value, 1.0, 0.01);
  EXPECT_EQ(r.z, 0.0);
}

TEST(RankSum, AllValuesEqual) {
  const std::vector<double> a(15, 1.0), b(20, 1.0);
  const auto r = wilcoxon_rank_sum(a, b);
  EXPECT_EQ(r.z, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(RankSum, MaximalSeparation) {
  const std::vector<double> a(200, 1.0), b(200, 0.0);
  const auto r = wilcoxon_rank_sum(a, b);
  EXPECT_LT(r.p_value, 1e-10);
  EXPECT_GT(r.z, 0.0);
}

TEST(RankSum, ClosedFormWithoutTies) {
  std::vector<double> a, b;
  for (int i = 1; i <= 10; ++i) a.push_back(i);
  for (int i = 11; i <= 20; ++i) b.push_back(i);
  // W = 55, E[W] = 105, Var = 10 * 10 * 21 / 12 = 175.
  const double z = -(50.0 - 0.5) / std::sqrt(175.0);
  const auto r = wilcoxon_rank_sum(a, b);
  EXPECT_NEAR(r.z, z, 1e-12);
  EXPECT_NEAR(r.p_value, std::erfc(-z / std::sqrt(2.0)), 1e-12);
}

TEST(RankSum, NeedsTenPerSide) {
  const std::vector<double> a(9, 1.0), b(20, 0.0);
  EXPECT_EQ(code_of([&] { wilcoxon_rank_sum(a, b); }), ErrorCode::kInsufficientData);
}

std::vector<double> bernoulli(std::mt19937_64& rng, std::size_t n, double p) {
  std::vector<double> v(n);
  for (auto& x : v) x = testing::uniform(rng) < p ? 1.0 : 0.0;
  return v;
}

TEST(RankSum, AgreesWithPermutationTest) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const auto a = bernoulli(rng, 200, 0.9);
    const auto b = bernoulli(rng, 200, 0.8);
    const double want = testing::permutation_p_value(a, b, 100000, seed);
    EXPECT_NEAR(wilcoxon_rank_sum(a, b).p_value, want, 0.02) << "seed " << seed;
  }
}

TEST(RankSum, NullPValuesAreUniform) {
  std::mt19937_64 rng(2020);
  std::vector<double> p;
  for (int s = 0; s < 500; ++s) {
    std::vector<double> a(200), b(200);
    for (auto& v : a) v = testing::gaussian(rng);
    for (auto& v : b) v = testing::gaussian(rng);
    p.push_back(wilcoxon_rank_sum(a, b).p_value);
  }
  EXPECT_LT(testing::ks_uniform_distance(p), 0.05);
}

TEST(BiasTest, EqualAccuraciesGiveZeroIndex) {
  // Both extreme groups: 100 samples at confidence 0.8, 90 correct.
  std::vector<double> conf, prox;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 300; ++i) {
    conf.push_back(0.8);
    prox.push_back(i < 100 ? 0.1 : i < 200 ? 0.5 : 0.9);
    y.push_back(i % 10 != 0 ? 1 : 0);
  }
  BiasTestOptions o;
  o.groups = 3;
  const auto r = bias_test(conf, y, prox, o);
  EXPECT_EQ(r.size_high, 200u);
  EXPECT_EQ(r.size_high, r.size_low);
  EXPECT_GE(r.bias_index, -1.0);
  EXPECT_LE(r.bias_index, 1.0);
  EXPECT_EQ(r.bias_index, r.accuracy_high - r.accuracy_low);
  // Targets are drawn with replacement, so exact equality needs identical groups.
  std::vector<std::uint8_t> all_correct(300, 1);
  const auto same = bias_test(conf, all_correct, prox, o);
  EXPECT_EQ(same.bias_index, 0.0);
  EXPECT_EQ(same.accuracy_high, 1.0);
}

struct Population {
  std::vector<double> conf, prox;
  std::vector<std::uint8_t> correct;
};

Population example1(std::mt19937_64& rng, std::size_t n) {
  Population p;
  for (std::size_t i = 0; i < n; ++i) {
    const bool dense = testing::uniform(rng) < 0.5;
    p.conf.push_back(0.7);
    p.prox.push_back((dense ? 0.8 : 0.2) + testing::uniform(rng, -0.05, 0.05));
    p.correct.push_back(testing::uniform(rng) < (dense ? 0.9 : 0.5) ? 1 : 0);
  }
  return p;
}

Population unbiased(std::mt19937_64& rng, std::size_t n) {
  Population p;
  for (std::size_t i = 0; i < n; ++i) {
    p.conf.push_back(testing::uniform(rng, 0.4, 0.95));
    p.prox.push_back(testing::uniform(rng));
    p.correct.push_back(testing::uniform(rng) < p.conf.back() ? 1 : 0);
  }
  return p;
}

TEST(BiasTest, DetectsExample1Bias) {
  std::mt19937_64 rng(5);
  const auto pop = example1(rng, 100000);
  const auto r = bias_test(pop.conf, pop.correct, pop.prox);
  EXPECT_NEAR(r.bias_index, 0.4, 0.03);
  EXPECT_LT(r.p_value, 0.001);
  EXPECT_GT(r.z_statistic, 0.0);
}

TEST(BiasTest, DeterministicUnderSeed) {
  std::mt19937_64 rng(6);
  const auto pop = unbiased(rng, 20000);
  const auto a = bias_test(pop.conf, pop.correct, pop.prox);
  const auto b = bias_test(pop.conf, pop.correct, pop.prox);
  EXPECT_EQ(a.bias_index, b.bias_index);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.rejected_count, b.rejected_count);
}

TEST(BiasTest, MissingProximity) {
  const std::vector<double> c(20, 0.5);
  const std::vector<std::uint8_t> y(20, 1);
  EXPECT_EQ(code_of([&] { bias_test(c, y, {}); }), ErrorCode::kMissingProximity);
}

// Null calibration of the full protocol: correctness depends on confidence only.
TEST(BiasTest, UnbiasedModelRejectsAtNominalRate) {
  constexpr std::size_t kSeeds = 200;
  std::vector<double> index(kSeeds), p(kSeeds);
  parallel_for(kSeeds, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      std::mt19937_64 rng(50000 + s);
      const auto pop = unbiased(rng, 100000);
      BiasTestOptions o;
      o.seed = s;
      const auto r = bias_test(pop.conf, pop.correct, pop.prox, o);
      index[s] = r.bias_index;
      p[s] = r.p_value;
    }
  });
  std::size_t rejected = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    EXPECT_LT(std::abs(index[s]), 0.02) << "seed " << s;
    rejected += p[s] < 0.05 ? 1 : 0;
  }
  const double rate = static_cast<double>(rejected) / kSeeds;
  RecordProperty("rejection_rate", std::to_string(rate));
  EXPECT_NEAR(rate, 0.05, 0.03);
}

}  // namespace
}  // namespace procal
