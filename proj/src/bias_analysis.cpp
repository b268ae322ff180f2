#include "procal/bias_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "procal/error.hpp"

namespace procal {
namespace {

std::vector<std::size_t> stable_order(std::span<const double> key) {
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return order;
}

// First k entries of a seeded partial Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> draw_without_replacement(std::mt19937_64& rng, std::size_t n,
                                                  std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

// Nearest-confidence lookup over one group, ties broken uniformly at random.
class NearestConfidence {
 public:
  explicit NearestConfidence(std::span<const double> conf) : order_(stable_order(conf)) {
    sorted_.reserve(order_.size());
    for (std::size_t i : order_) sorted_.push_back(conf[i]);
  }

  std::size_t find(double c, std::mt19937_64& rng) const {
    const auto it = std::lower_bound(sorted_.begin(), sorted_.end(), c);
    double best = std::numeric_limits<double>::infinity();
    if (it != sorted_.end()) best = *it - c;
    if (it != sorted_.begin()) best = std::min(best, c - *std::prev(it));

    // Candidates: the run of values at c - best and the run at c + best.
    std::pair<std::size_t, std::size_t> runs[2];
    std::size_t n_runs = 0;
    auto add_run = [&](double value) {
      const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), value);
      const auto hi = std::upper_bound(lo, sorted_.end(), value);
      if (lo == hi) return;
      const auto first = static_cast<std::size_t>(lo - sorted_.begin());
      const auto last = static_cast<std::size_t>(hi - sorted_.begin());
      if (n_runs == 1 && runs[0].first == first) return;
      runs[n_runs++] = {first, last};
    };
    if (it != sorted_.begin() && c - *std::prev(it) == best) add_run(*std::prev(it));
    if (it != sorted_.end() && *it - c == best) add_run(*it);

    std::size_t total = 0;
    for (std::size_t r = 0; r < n_runs; ++r) total += runs[r].second - runs[r].first;
    std::size_t pick = total > 1 ? static_cast<std::size_t>(uniform_below(rng, total)) : 0;
    for (std::size_t r = 0; r < n_runs; ++r) {
      const std::size_t len = runs[r].second - runs[r].first;
      if (pick < len) return order_[runs[r].first + pick];
      pick -= len;
    }
    return order_.front();
  }

 private:
  std::vector<std::size_t> order_;
  std::vector<double> sorted_;
};

void check_group(const GroupSamples& g, const char* name) {
  require(!g.conf.empty(), ErrorCode::kInsufficientData,
          std::string(name) + " proximity group is empty");
  require(g.conf.size() == g.correct.size(), ErrorCode::kInvalidArgument,
          "confidence and correctness arrays differ in length");
}

double accuracy_of(std::span<const std::uint8_t> correct, std::span<const std::size_t> idx) {
  std::size_t hits = 0;
  for (std::size_t i : idx) hits += correct[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

}  // namespace

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  // Reject the top partial block so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

std::vector<std::size_t> proximity_groups(std::span<const double> prox, std::size_t groups) {
  require(groups >= 1, ErrorCode::kInvalidArgument, "number of groups must be >= 1");
  const std::size_t n = prox.size();
  require(n >= groups, ErrorCode::kInsufficientData,
          "proximity grouping needs n >= G (n=" + std::to_string(n) +
              ", G=" + std::to_string(groups) + ")");
  for (double p : prox) {
    if (!std::isfinite(p)) throw Error(ErrorCode::kNonFinite, "non-finite proximity");
  }
  const auto order = stable_order(prox);
  std::vector<std::size_t> group(n);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t r = g * n / groups; r < (g + 1) * n / groups; ++r) group[order[r]] = g;
  }
  return group;
}

MatchedGroups confidence_match(GroupSamples high, GroupSamples low, std::size_t n_draw,
                               double max_diff, std::uint64_t seed) {
  check_group(high, "high");
  check_group(low, "low");
  require(n_draw >= 1, ErrorCode::kInvalidArgument, "n_draw must be >= 1");
  require(max_diff >= 0.0, ErrorCode::kInvalidArgument, "max_diff must be >= 0");

  std::mt19937_64 rng(seed);
  const NearestConfidence high_lookup(high.conf);
  const NearestConfidence low_lookup(low.conf);
  MatchedGroups out;
  double sum_high = 0.0;
  double sum_low = 0.0;
  auto keep = [&](std::size_t h, std::size_t l) {
    if (std::abs(high.conf[h] - low.conf[l]) > max_diff) {
      ++out.rejected_count;
      return;
    }
    out.high.push_back(h);
    out.low.push_back(l);
    sum_high += high.conf[h];
    sum_low += low.conf[l];
  };

  for (std::size_t h : draw_without_replacement(rng, high.conf.size(),
                                                std::min(n_draw, high.conf.size()))) {
    keep(h, low_lookup.find(high.conf[h], rng));
  }
  for (std::size_t l : draw_without_replacement(rng, low.conf.size(),
                                                std::min(n_draw, low.conf.size()))) {
    keep(high_lookup.find(low.conf[l], rng), l);
  }

  if (out.pairs() == 0) {
    throw Error(ErrorCode::kNoConfidenceOverlap,
                "no confidence overlap: every matched pair differs by more than " +
                    std::to_string(max_diff) +
                    " in confidence; reduce the number of proximity groups (e.g. --groups 3)");
  }
  out.mean_conf_high = sum_high / static_cast<double>(out.pairs());
  out.mean_conf_low = sum_low / static_cast<double>(out.pairs());
  return out;
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  require(a.size() >= 10 && b.size() >= 10, ErrorCode::kInsufficientData,
          "rank-sum test needs at least 10 samples per group (got " + std::to_string(a.size()) +
              " and " + std::to_string(b.size()) + ")");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  for (double v : pooled) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite rank-sum input");
  }
  const auto order = stable_order(pooled);
  const std::size_t n = pooled.size();

  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  // Smallest gap between adjacent distinct midranks: the lattice step of the
  // rank sum. It is 1 without ties and n/2 for two-valued data.
  double step = std::numeric_limits<double>::infinity();
  double prev_midrank = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[order[j]] == pooled[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    if (i > 0) step = std::min(step, midrank - prev_midrank);
    prev_midrank = midrank;
    for (std::size_t k = i; k < j; ++k) {
      if (order[k] < a.size()) rank_sum_a += midrank;
    }
    const auto t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }

  const auto n1 = static_cast<double>(a.size());
  const auto n2 = static_cast<double>(b.size());
  const auto nn = static_cast<double>(n);
  const double variance = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (!(variance > 0.0)) return {};
  const double diff = rank_sum_a - n1 * (nn + 1.0) / 2.0;
  const double corrected = std::copysign(std::max(std::abs(diff) - 0.5 * step, 0.0), diff);
  RankSumResult result;
  result.z = corrected / std::sqrt(variance);
  result.p_value = std::min(1.0, std::erfc(std::abs(result.z) / std::sqrt(2.0)));
  return result;
}

BiasTestResult bias_test(std::span<const double> conf, std::span<const std::uint8_t> correct,
                         std::span<const double> prox, const BiasTestOptions& options) {
  require(conf.size() == correct.size(), ErrorCode::kInvalidArgument,
          "confidence and correctness arrays differ in length");
  require(prox.size() == conf.size(), ErrorCode::kMissingProximity,
          "proximity values must align with the predictions");
  require(options.groups >= 2, ErrorCode::kInvalidArgument, "bias test needs >= 2 groups");

  const auto group = proximity_groups(prox, options.groups);
  std::vector<std::size_t> rows_high, rows_low;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] == options.groups - 1) rows_high.push_back(i);
    if (group[i] == 0) rows_low.push_back(i);
  }
  auto gather = [&](const std::vector<std::size_t>& rows, std::vector<double>& c,
                    std::vector<std::uint8_t>& y) {
    for (std::size_t i : rows) {
      c.push_back(conf[i]);
      y.push_back(correct[i]);
    }
  };
  std::vector<double> conf_high, conf_low;
  std::vector<std::uint8_t> correct_high, correct_low;
  gather(rows_high, conf_high, correct_high);
  gather(rows_low, conf_low, correct_low);

  const MatchedGroups matched =
      confidence_match({conf_high, correct_high}, {conf_low, correct_low}, options.n_draw,
                       options.max_diff, options.seed);

  std::vector<double> y_high, y_low;
  for (std::size_t h : matched.high) y_high.push_back(correct_high[h] ? 1.0 : 0.0);
  for (std::size_t l : matched.low) y_low.push_back(correct_low[l] ? 1.0 : 0.0);

  BiasTestResult result;
  result.options = options;
  result.size_high = matched.high.size();
  result.size_low = matched.low.size();
  result.accuracy_high = accuracy_of(correct_high, matched.high);
  result.accuracy_low = accuracy_of(correct_low, matched.low);
  result.bias_index = result.accuracy_high - result.accuracy_low;
  result.mean_conf_high = matched.mean_conf_high;
  result.mean_conf_low = matched.mean_conf_low;
  result.rejected_count = matched.rejected_count;
  const RankSumResult rs = wilcoxon_rank_sum(y_high, y_low);
  result.z_statistic = rs.z;
  result.p_value = rs.p_value;
  return result;
}

BiasTestResult bias_test(const PredictionSet& preds, std::span<const double> prox,
                         const BiasTestOptions& options) {
  const auto correct = preds.correctness();
  return bias_test(preds.confidence, correct, prox, options);
}

}  // namespace procal
