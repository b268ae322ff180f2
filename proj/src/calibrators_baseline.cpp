#include "procal/calibrators_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "procal/error.hpp"

namespace procal {
namespace {

void check_logits(std::span<const double> logits, int num_classes, std::span<const int> labels) {
  require(num_classes >= 2, ErrorCode::kInvalidArgument, "need at least 2 classes");
  require(logits.size() == labels.size() * static_cast<std::size_t>(num_classes),
          ErrorCode::kDimensionMismatch, "logit matrix does not match the label count");
  for (int y : labels) {
    require(y >= 0 && y < num_classes, ErrorCode::kLabelOutOfRange, "label out of range");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) throw Error(ErrorCode::kNonFinite, "non-finite logit");
  }
}

void check_pairs(std::span<const double> confidence, std::span<const std::uint8_t> correct) {
  require(confidence.size() == correct.size(), ErrorCode::kInvalidArgument,
          "confidence and correctness arrays differ in length");
  for (double c : confidence) {
    if (!std::isfinite(c)) throw Error(ErrorCode::kNonFinite, "non-finite confidence");
  }
}

std::vector<std::size_t> sorted_by_confidence(std::span<const double> confidence) {
  std::vector<std::size_t> order(confidence.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidence[a] < confidence[b]; });
  return order;
}

}  // namespace

double temperature_nll(std::span<const double> logits, int num_classes,
                       std::span<const int> labels, double temperature) {
  const auto c = static_cast<std::size_t>(num_classes);
  const double inv_t = 1.0 / temperature;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data() + i * c;
    const double top = *std::max_element(row, row + c) * inv_t;
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) denom += std::exp(row[k] * inv_t - top);
    total += top + std::log(denom) - row[labels[i]] * inv_t;
  }
  return total / static_cast<double>(labels.size());
}

TemperatureModel fit_temperature(std::span<const double> logits, int num_classes,
                                 std::span<const int> labels) {
  check_logits(logits, num_classes, labels);
  require(labels.size() >= 10, ErrorCode::kInsufficientData,
          "temperature scaling needs at least 10 samples");

  const auto c = static_cast<std::size_t>(num_classes);
  bool flat = true;
  for (std::size_t i = 0; i < labels.size() && flat; ++i) {
    const auto row = logits.subspan(i * c, c);
    flat = std::all_of(row.begin(), row.end(), [&](double z) { return z == row[0]; });
  }
  if (flat) return TemperatureModel{1.0, true};

  auto nll_at = [&](double log_t) {
    return temperature_nll(logits, num_classes, labels, std::exp(log_t));
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(kMinTemperature);
  double b = std::log(kMaxTemperature);
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = nll_at(x1);
  double f2 = nll_at(x2);
  while (b - a > kLogTemperatureTolerance) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = nll_at(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = nll_at(x2);
    }
  }
  const double best_log_t = 0.5 * (a + b);
  // T = 1 wins when the optimum sits within tolerance of it.
  if (nll_at(0.0) < nll_at(best_log_t)) return TemperatureModel{1.0, false};
  return TemperatureModel{std::exp(best_log_t), false};
}

TemperatureModel fit_temperature(const PredictionSet& preds) {
  require(preds.has_logits(), ErrorCode::kMissingInput, "temperature scaling needs logits");
  return fit_temperature(preds.logits, preds.num_classes, preds.true_label);
}

SoftmaxResult apply_temperature(const TemperatureModel& model, std::span<const double> logits) {
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= model.temperature;
  return softmax_confidence(scaled);
}

std::vector<double> apply_temperature(const TemperatureModel& model, const PredictionSet& preds) {
  require(preds.has_logits(), ErrorCode::kMissingInput, "temperature scaling needs logits");
  std::vector<double> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out[i] = apply_temperature(model, preds.logit_row(i)).confidence;
  }
  return out;
}

double MonotoneMap::operator()(double confidence) const {
  const auto it = std::upper_bound(breaks.begin(), breaks.end(), confidence);
  return values[static_cast<std::size_t>(it - breaks.begin())];
}

MonotoneMap fit_histogram_binning(std::span<const double> confidence,
                                  std::span<const std::uint8_t> correct, std::size_t bins) {
  check_pairs(confidence, correct);
  require(bins >= 1, ErrorCode::kInvalidArgument, "histogram binning needs >= 1 bin");
  const std::size_t n = confidence.size();
  require(n >= bins, ErrorCode::kInsufficientData,
          "histogram binning needs n >= B (n=" + std::to_string(n) +
              ", B=" + std::to_string(bins) + ")");
  const auto order = sorted_by_confidence(confidence);

  struct Group {
    std::size_t begin;
    std::size_t end;
  };
  std::vector<Group> groups;
  for (std::size_t k = 0; k < bins; ++k) {
    const std::size_t begin = k * n / bins;
    const std::size_t end = (k + 1) * n / bins;
    if (!groups.empty() &&
        confidence[order[begin]] <= confidence[order[groups.back().end - 1]]) {
      groups.back().end = end;  // tie straddles the edge
    } else {
      groups.push_back({begin, end});
    }
  }

  MonotoneMap map;
  map.kind = MonotoneMap::Kind::kHistogram;
  for (const Group& g : groups) {
    std::size_t hits = 0;
    for (std::size_t i = g.begin; i < g.end; ++i) hits += correct[order[i]] ? 1 : 0;
    map.values.push_back(static_cast<double>(hits) / static_cast<double>(g.end - g.begin));
    if (g.begin > 0) map.breaks.push_back(confidence[order[g.begin]]);
  }
  return map;
}

MonotoneMap fit_isotonic(std::span<const double> confidence,
                         std::span<const std::uint8_t> correct) {
  check_pairs(confidence, correct);
  require(confidence.size() >= 1, ErrorCode::kInsufficientData, "isotonic fit on empty input");
  const auto order = sorted_by_confidence(confidence);

  struct Pool {
    double first_x;
    double sum;
    double weight;
    double mean() const { return sum / weight; }
  };
  // Equal inputs share one fitted value, so ties are pooled up front.
  std::vector<Pool> blocks;
  for (std::size_t i : order) {
    const double y = correct[i] ? 1.0 : 0.0;
    if (!blocks.empty() && blocks.back().first_x == confidence[i]) {
      blocks.back().sum += y;
      blocks.back().weight += 1.0;
    } else {
      blocks.push_back({confidence[i], y, 1.0});
    }
  }
  std::vector<Pool> pools;
  for (const Pool& block : blocks) {
    pools.push_back(block);
    while (pools.size() >= 2 && pools[pools.size() - 2].mean() > pools.back().mean()) {
      const Pool top = pools.back();
      pools.pop_back();
      pools.back().sum += top.sum;
      pools.back().weight += top.weight;
    }
  }

  MonotoneMap map;
  map.kind = MonotoneMap::Kind::kIsotonic;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    map.values.push_back(std::clamp(pools[p].mean(), 0.0, 1.0));
    if (p > 0) map.breaks.push_back(pools[p].first_x);
  }
  return map;
}

}  // namespace procal
