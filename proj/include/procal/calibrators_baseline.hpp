#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "procal/dataset_io.hpp"

namespace procal {

// Log-space search interval for the temperature.
inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;
inline constexpr double kLogTemperatureTolerance = 1e-4;

struct TemperatureModel {
  double temperature = 1.0;
  // Set when the likelihood does not depend on T (every logit row constant).
  bool degenerate = false;
};

// Mean negative log-likelihood of softmax(logits / T) at the true labels.
double temperature_nll(std::span<const double> logits, int num_classes,
                       std::span<const int> labels, double temperature);

// Golden-section search on log T over [log 0.05, log 20].
TemperatureModel fit_temperature(std::span<const double> logits, int num_classes,
                                 std::span<const int> labels);
TemperatureModel fit_temperature(const PredictionSet& preds);

// Argmax is unchanged by any positive temperature.
SoftmaxResult apply_temperature(const TemperatureModel& model, std::span<const double> logits);
std::vector<double> apply_temperature(const TemperatureModel& model, const PredictionSet& preds);

// Piecewise-constant map from confidence to calibrated confidence.
//
// values has one more entry than breaks. A query x takes values[i] where i is
// the number of breaks <= x, so a query sitting exactly on a break takes the
// higher interval's value; queries outside the fitted range take the end values.
struct MonotoneMap {
  enum class Kind { kHistogram, kIsotonic };

  Kind kind = Kind::kHistogram;
  std::vector<double> breaks;
  std::vector<double> values;

  double operator()(double confidence) const;
};

inline constexpr std::size_t kDefaultHistogramBins = 15;

// Equal-mass bins on confidence, each mapped to its empirical accuracy.
// Bins whose edge would split tied confidences are merged.
MonotoneMap fit_histogram_binning(std::span<const double> confidence,
                                  std::span<const std::uint8_t> correct,
                                  std::size_t bins = kDefaultHistogramBins);

// Least-squares non-decreasing fit by pool-adjacent-violators.
MonotoneMap fit_isotonic(std::span<const double> confidence, std::span<const std::uint8_t> correct);

inline double apply_monotone(const MonotoneMap& map, double confidence) { return map(confidence); }

}  // namespace procal
