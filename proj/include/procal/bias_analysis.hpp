#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "procal/dataset_io.hpp"

namespace procal {

inline constexpr std::size_t kDefaultGroups = 5;
inline constexpr std::size_t kDefaultDraws = 10000;
inline constexpr double kDefaultMaxConfDiff = 0.05;
inline constexpr std::uint64_t kDefaultSeed = 2020;

// Group id in [0, groups) per sample; group 0 holds the lowest proximities.
// Equal-mass chunks of the stable proximity order.
std::vector<std::size_t> proximity_groups(std::span<const double> prox,
                                          std::size_t groups = kDefaultGroups);

struct GroupSamples {
  std::span<const double> conf;
  std::span<const std::uint8_t> correct;
};

// Retained pairs of a bidirectional nearest-confidence matching. high[i] and
// low[i] index into the high and low inputs and form one pair; an index may
// repeat because targets are chosen with replacement.
struct MatchedGroups {
  std::vector<std::size_t> high;
  std::vector<std::size_t> low;
  double mean_conf_high = 0.0;
  double mean_conf_low = 0.0;
  std::size_t rejected_count = 0;

  std::size_t pairs() const { return high.size(); }
};

MatchedGroups confidence_match(GroupSamples high, GroupSamples low,
                               std::size_t n_draw = kDefaultDraws,
                               double max_diff = kDefaultMaxConfDiff,
                               std::uint64_t seed = kDefaultSeed);

struct RankSumResult {
  double z = 0.0;
  double p_value = 1.0;
};

// Two-sided normal-approximation rank-sum test with midranks and
// tie-corrected variance. The continuity correction is half the smallest gap
// between adjacent distinct midranks: 0.5 for untied data, n/4 for 0/1 data.
// Positive z means a ranks higher.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

struct BiasTestOptions {
  std::size_t groups = kDefaultGroups;
  std::size_t n_draw = kDefaultDraws;
  double max_diff = kDefaultMaxConfDiff;
  std::uint64_t seed = kDefaultSeed;
};

struct BiasTestResult {
  double bias_index = 0.0;
  double z_statistic = 0.0;
  double p_value = 1.0;
  std::size_t size_high = 0;
  std::size_t size_low = 0;
  double accuracy_high = 0.0;
  double accuracy_low = 0.0;
  double mean_conf_high = 0.0;
  double mean_conf_low = 0.0;
  std::size_t rejected_count = 0;
  BiasTestOptions options;
};

BiasTestResult bias_test(std::span<const double> conf, std::span<const std::uint8_t> correct,
                         std::span<const double> prox, const BiasTestOptions& options = {});
BiasTestResult bias_test(const PredictionSet& preds, std::span<const double> prox,
                         const BiasTestOptions& options = {});

// Uniform integer in [0, n) by rejection, identical across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

}  // namespace procal
