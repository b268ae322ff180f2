#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "procal/calibrators_baseline.hpp"
#include "procal/dataset_io.hpp"

namespace procal {

inline constexpr double kBandwidthFloor = 1e-3;
inline constexpr double kDensityFloor = 1e-300;

// Two-dimensional product-Gaussian kernel density over (confidence, proximity).
//
// Bandwidths follow the normal reference rule 1.06 * sigma * m^(-1/5) per
// coordinate, sigma being the sample standard deviation, floored at 1e-3.
//
// Evaluation walks a bandwidth-scaled grid outwards from the query and stops
// once every unvisited kernel together could add less than 1e-15 of the
// running sum, so results agree with the plain kernel sum to ~1e-15 relative.
class Kde2d {
 public:
  static Kde2d fit(std::span<const double> conf, std::span<const double> prox);
  static Kde2d with_bandwidths(std::span<const double> conf, std::span<const double> prox,
                               double bw_conf, double bw_prox);

  double operator()(double conf, double prox) const;

  std::size_t size() const { return conf_.size(); }
  double bandwidth_conf() const { return bw_conf_; }
  double bandwidth_prox() const { return bw_prox_; }
  // Points in their original order.
  std::span<const double> conf_points() const { return conf_; }
  std::span<const double> prox_points() const { return prox_; }

 private:
  void build_grid();

  std::vector<double> conf_;
  std::vector<double> prox_;
  double bw_conf_ = 1.0;
  double bw_prox_ = 1.0;

  // Grid over bandwidth-scaled coordinates; cell_start_ has one entry per
  // cell plus a sentinel, and the scaled points are stored cell by cell.
  double origin_u_ = 0.0;
  double origin_v_ = 0.0;
  double cell_u_ = 1.0;
  double cell_v_ = 1.0;
  std::size_t cols_ = 1;
  std::size_t rows_ = 1;
  std::vector<std::uint32_t> cell_start_;
  std::vector<double> grid_u_;
  std::vector<double> grid_v_;
};

double normal_reference_bandwidth(std::span<const double> values);

// Posterior probability of a correct prediction given (confidence, proximity),
// from KDEs of the correct and incorrect calibration samples and the class
// ratio gamma = #incorrect / #correct.
struct DensityRatioModel {
  Kde2d positive;
  Kde2d negative;
  double gamma = 1.0;

  double operator()(double conf, double prox) const;
};

DensityRatioModel fit_density_ratio(std::span<const double> conf, std::span<const double> prox,
                                    std::span<const std::uint8_t> correct);

inline constexpr std::size_t kDefaultShiftConfBins = 10;
inline constexpr std::size_t kDefaultShiftProxBins = 10;
inline constexpr double kDefaultShrinkage = 0.5;

// Additive per-cell correction over a quantile grid of (confidence, proximity).
//
// conf_edges holds M+1 edges; prox_edges holds H+1 edges per confidence
// stripe. A value on an interior edge belongs to the higher cell, and values
// outside the outer edges fall into the nearest edge cell.
struct BinMeanShiftModel {
  std::vector<double> conf_edges;
  std::vector<std::vector<double>> prox_edges;
  std::vector<double> shift;  // stripe-major, M*H; accuracy - mean confidence
  std::vector<std::size_t> counts;
  double lambda = kDefaultShrinkage;

  std::size_t conf_bins() const { return conf_edges.size() - 1; }
  std::size_t prox_bins() const { return prox_edges.empty() ? 0 : prox_edges.front().size() - 1; }
  std::size_t cell_of(double conf, double prox) const;
  double operator()(double conf, double prox) const;
};

BinMeanShiftModel fit_bin_mean_shift(std::span<const double> conf, std::span<const double> prox,
                                     std::span<const std::uint8_t> correct,
                                     std::size_t conf_bins = kDefaultShiftConfBins,
                                     std::size_t prox_bins = kDefaultShiftProxBins,
                                     double lambda = kDefaultShrinkage);

// --- Composition with a base calibrator -------------------------------------

enum class BaseMethod { kConf, kTemperature, kHistogram, kIsotonic };
enum class ProcalMethod { kNone, kDensityRatio, kBinMeanShift };

std::string_view to_string(BaseMethod method);
std::string_view to_string(ProcalMethod method);
BaseMethod parse_base_method(std::string_view name);
ProcalMethod parse_procal_method(std::string_view name);

struct PipelineOptions {
  BaseMethod base = BaseMethod::kConf;
  ProcalMethod procal = ProcalMethod::kNone;
  std::size_t histogram_bins = kDefaultHistogramBins;
  std::size_t shift_conf_bins = kDefaultShiftConfBins;
  std::size_t shift_prox_bins = kDefaultShiftProxBins;
  double lambda = kDefaultShrinkage;
};

using BaseModel = std::variant<std::monostate, TemperatureModel, MonotoneMap>;
using ProcalModel = std::variant<std::monostate, DensityRatioModel, BinMeanShiftModel>;

// Base calibrator followed by an optional proximity-informed stage. The base
// is fitted first; the proximity stage is then fitted on the base-calibrated
// confidences of the same calibration samples.
class CalibrationPipeline {
 public:
  static CalibrationPipeline fit(const PredictionSet& calibration,
                                 std::span<const double> proximity,
                                 const PipelineOptions& options);
  // Reassembles a pipeline from previously fitted stages.
  static CalibrationPipeline from_models(const PipelineOptions& options, BaseModel base,
                                         ProcalModel procal);

  std::vector<double> base_confidence(const PredictionSet& preds) const;
  std::vector<double> apply(const PredictionSet& preds, std::span<const double> proximity) const;
  std::vector<double> apply_stage(std::span<const double> base_conf,
                                  std::span<const double> proximity) const;

  const PipelineOptions& options() const { return options_; }
  const BaseModel& base_model() const { return base_; }
  const ProcalModel& procal_model() const { return procal_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  PipelineOptions options_;
  BaseModel base_;
  ProcalModel procal_;
  std::vector<std::string> warnings_;
};

}  // namespace procal
