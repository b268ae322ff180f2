#include "procal/procal_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "procal/error.hpp"
#include "procal/parallel.hpp"

namespace procal {
namespace {

constexpr double kPruneTolerance = 1e-15;
constexpr std::size_t kMaxGridCells = 512;

void check_points(std::span<const double> conf, std::span<const double> prox) {
  require(conf.size() == prox.size(), ErrorCode::kInvalidArgument,
          "confidence and proximity arrays differ in length");
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (!std::isfinite(conf[i]) || !std::isfinite(prox[i])) {
      throw Error(ErrorCode::kNonFinite, "non-finite KDE input");
    }
  }
}

void check_triples(std::span<const double> conf, std::span<const double> prox,
                   std::span<const std::uint8_t> correct) {
  check_points(conf, prox);
  require(correct.size() == conf.size(), ErrorCode::kInvalidArgument,
          "correctness array differs in length");
}

std::size_t count_le(std::span<const double> sorted_interior, double value) {
  return static_cast<std::size_t>(
      std::upper_bound(sorted_interior.begin(), sorted_interior.end(), value) -
      sorted_interior.begin());
}

// M+1 quantile edges: min, the first value of each later equal-mass chunk, max.
std::vector<double> quantile_edges(std::vector<double> values, std::size_t bins) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::vector<double> edges(bins + 1, 0.0);
  if (n == 0) return edges;
  edges.front() = values.front();
  edges.back() = values.back();
  for (std::size_t k = 1; k < bins; ++k) edges[k] = values[k * n / bins];
  return edges;
}

}  // namespace

double normal_reference_bandwidth(std::span<const double> values) {
  const auto m = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / m;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / (m - 1.0));
  return std::max(1.06 * sigma * std::pow(m, -0.2), kBandwidthFloor);
}

Kde2d Kde2d::fit(std::span<const double> conf, std::span<const double> prox) {
  check_points(conf, prox);
  if (conf.size() < 2) {
    throw Error(ErrorCode::kInsufficientPartition,
                "insufficient partition: KDE needs at least 2 points, got " +
                    std::to_string(conf.size()));
  }
  return with_bandwidths(conf, prox, normal_reference_bandwidth(conf),
                         normal_reference_bandwidth(prox));
}

Kde2d Kde2d::with_bandwidths(std::span<const double> conf, std::span<const double> prox,
                             double bw_conf, double bw_prox) {
  check_points(conf, prox);
  require(!conf.empty(), ErrorCode::kInsufficientPartition, "KDE needs at least one point");
  require(bw_conf > 0.0 && bw_prox > 0.0 && std::isfinite(bw_conf) && std::isfinite(bw_prox),
          ErrorCode::kInvalidArgument, "KDE bandwidths must be positive");
  Kde2d kde;
  kde.conf_.assign(conf.begin(), conf.end());
  kde.prox_.assign(prox.begin(), prox.end());
  kde.bw_conf_ = bw_conf;
  kde.bw_prox_ = bw_prox;
  kde.build_grid();
  return kde;
}

void Kde2d::build_grid() {
  const std::size_t m = conf_.size();
  std::vector<double> u(m), v(m);
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = conf_[i] / bw_conf_;
    v[i] = prox_[i] / bw_prox_;
  }
  const auto [umin, umax] = std::minmax_element(u.begin(), u.end());
  const auto [vmin, vmax] = std::minmax_element(v.begin(), v.end());
  origin_u_ = *umin;
  origin_v_ = *vmin;
  // Cells are one bandwidth wide unless that would exceed the cell budget.
  const double span_u = *umax - *umin;
  const double span_v = *vmax - *vmin;
  cols_ = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(span_u)) + 1, 1, kMaxGridCells);
  rows_ = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(span_v)) + 1, 1, kMaxGridCells);
  const double cell_u = std::max(1.0, span_u / static_cast<double>(cols_));
  const double cell_v = std::max(1.0, span_v / static_cast<double>(rows_));

  auto cell_index = [&](std::size_t i) {
    auto cx = std::min(cols_ - 1, static_cast<std::size_t>((u[i] - origin_u_) / cell_u));
    auto cy = std::min(rows_ - 1, static_cast<std::size_t>((v[i] - origin_v_) / cell_v));
    return cy * cols_ + cx;
  };
  cell_start_.assign(cols_ * rows_ + 1, 0);
  for (std::size_t i = 0; i < m; ++i) ++cell_start_[cell_index(i) + 1];
  std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
  std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  grid_u_.resize(m);
  grid_v_.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint32_t slot = fill[cell_index(i)]++;
    grid_u_[slot] = u[i];
    grid_v_[slot] = v[i];
  }
  cell_u_ = cell_u;
  cell_v_ = cell_v;
}

double Kde2d::operator()(double conf, double prox) const {
  const double qu = conf / bw_conf_;
  const double qv = prox / bw_prox_;
  const auto cols = static_cast<std::int64_t>(cols_);
  const auto rows = static_cast<std::int64_t>(rows_);
  const auto cx = static_cast<std::int64_t>(std::floor((qu - origin_u_) / cell_u_));
  const auto cy = static_cast<std::int64_t>(std::floor((qv - origin_v_) / cell_v_));
  auto dist_to_range = [](std::int64_t c, std::int64_t hi) -> std::int64_t {
    return c < 0 ? -c : (c > hi ? c - hi : 0);
  };
  const std::int64_t ring_start = std::max(dist_to_range(cx, cols - 1), dist_to_range(cy, rows - 1));
  const std::int64_t ring_end = std::max({std::abs(cx), std::abs(cx - (cols - 1)), std::abs(cy),
                                          std::abs(cy - (rows - 1))});
  const double cell_min = std::min(cell_u_, cell_v_);
  const std::size_t m = grid_u_.size();

  double sum = 0.0;
  std::size_t visited = 0;
  auto visit_cell = [&](std::int64_t i, std::int64_t j) {
    if (i < 0 || i >= cols || j < 0 || j >= rows) return;
    const auto cell = static_cast<std::size_t>(j * cols + i);
    const std::uint32_t begin = cell_start_[cell];
    const std::uint32_t end = cell_start_[cell + 1];
    double local = 0.0;
    for (std::uint32_t k = begin; k < end; ++k) {
      const double du = grid_u_[k] - qu;
      const double dv = grid_v_[k] - qv;
      local += std::exp(-0.5 * (du * du + dv * dv));
    }
    sum += local;
    visited += end - begin;
  };

  for (std::int64_t r = ring_start; r <= ring_end && visited < m; ++r) {
    if (r >= 1) {
      // Every cell on ring r or beyond is at least (r - 1) cells away.
      const double gap = static_cast<double>(r - 1) * cell_min;
      const double bound = static_cast<double>(m - visited) * std::exp(-0.5 * gap * gap);
      if (bound <= kPruneTolerance * sum) break;
    }
    if (r == 0) {
      visit_cell(cx, cy);
      continue;
    }
    for (std::int64_t i = cx - r; i <= cx + r; ++i) {
      visit_cell(i, cy - r);
      visit_cell(i, cy + r);
    }
    for (std::int64_t j = cy - r + 1; j <= cy + r - 1; ++j) {
      visit_cell(cx - r, j);
      visit_cell(cx + r, j);
    }
  }
  const double norm = 2.0 * std::numbers::pi * bw_conf_ * bw_prox_ * static_cast<double>(m);
  return sum / norm;
}

double DensityRatioModel::operator()(double conf, double prox) const {
  const double p_pos = std::max(positive(conf, prox), kDensityFloor);
  const double p_neg = std::max(negative(conf, prox), kDensityFloor);
  return std::clamp(p_pos / (p_pos + gamma * p_neg), 0.0, 1.0);
}

DensityRatioModel fit_density_ratio(std::span<const double> conf, std::span<const double> prox,
                                    std::span<const std::uint8_t> correct) {
  check_triples(conf, prox, correct);
  std::vector<double> pos_c, pos_d, neg_c, neg_d;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    auto& c = correct[i] ? pos_c : neg_c;
    auto& d = correct[i] ? pos_d : neg_d;
    c.push_back(conf[i]);
    d.push_back(prox[i]);
  }
  if (pos_c.size() < 2 || neg_c.size() < 2) {
    throw Error(ErrorCode::kInsufficientPartition,
                "insufficient partition: density-ratio calibration needs >= 2 correct and >= 2 "
                "incorrect samples (got " +
                    std::to_string(pos_c.size()) + " and " + std::to_string(neg_c.size()) + ")");
  }
  return DensityRatioModel{Kde2d::fit(pos_c, pos_d), Kde2d::fit(neg_c, neg_d),
                           static_cast<double>(neg_c.size()) / static_cast<double>(pos_c.size())};
}

std::size_t BinMeanShiftModel::cell_of(double conf, double prox) const {
  const std::size_t m = conf_bins();
  const std::size_t h = prox_bins();
  const std::size_t stripe = count_le(std::span(conf_edges).subspan(1, m - 1), conf);
  const std::size_t cell = count_le(std::span(prox_edges[stripe]).subspan(1, h - 1), prox);
  return stripe * h + cell;
}

double BinMeanShiftModel::operator()(double conf, double prox) const {
  return std::clamp(conf + lambda * shift[cell_of(conf, prox)], 0.0, 1.0);
}

BinMeanShiftModel fit_bin_mean_shift(std::span<const double> conf, std::span<const double> prox,
                                     std::span<const std::uint8_t> correct, std::size_t conf_bins,
                                     std::size_t prox_bins, double lambda) {
  check_triples(conf, prox, correct);
  require(conf_bins >= 1 && prox_bins >= 1, ErrorCode::kInvalidArgument,
          "bin-mean-shift needs at least one bin per axis");
  require(lambda > 0.0 && lambda <= 1.0, ErrorCode::kInvalidArgument,
          "shrinkage lambda must lie in (0, 1]");
  const std::size_t n = conf.size();
  require(n >= conf_bins * prox_bins, ErrorCode::kInsufficientData,
          "bin-mean-shift needs n >= M*H (n=" + std::to_string(n) +
              ", M*H=" + std::to_string(conf_bins * prox_bins) + ")");

  BinMeanShiftModel model;
  model.lambda = lambda;
  model.conf_edges = quantile_edges(std::vector<double>(conf.begin(), conf.end()), conf_bins);
  const auto interior = std::span(model.conf_edges).subspan(1, conf_bins - 1);

  std::vector<std::vector<double>> stripe_prox(conf_bins);
  std::vector<std::size_t> stripe_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    stripe_of[i] = count_le(interior, conf[i]);
    stripe_prox[stripe_of[i]].push_back(prox[i]);
  }
  model.prox_edges.reserve(conf_bins);
  for (auto& values : stripe_prox) model.prox_edges.push_back(quantile_edges(values, prox_bins));

  std::vector<double> conf_sum(conf_bins * prox_bins, 0.0);
  std::vector<std::size_t> hits(conf_bins * prox_bins, 0);
  model.counts.assign(conf_bins * prox_bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cell = model.cell_of(conf[i], prox[i]);
    conf_sum[cell] += conf[i];
    hits[cell] += correct[i] ? 1 : 0;
    ++model.counts[cell];
  }
  model.shift.assign(conf_bins * prox_bins, 0.0);
  for (std::size_t cell = 0; cell < model.shift.size(); ++cell) {
    if (model.counts[cell] == 0) continue;
    const auto count = static_cast<double>(model.counts[cell]);
    model.shift[cell] = static_cast<double>(hits[cell]) / count - conf_sum[cell] / count;
  }
  return model;
}

std::string_view to_string(BaseMethod method) {
  switch (method) {
    case BaseMethod::kConf: return "conf";
    case BaseMethod::kTemperature: return "ts";
    case BaseMethod::kHistogram: return "hb";
    case BaseMethod::kIsotonic: return "ir";
  }
  return "unknown";
}

std::string_view to_string(ProcalMethod method) {
  switch (method) {
    case ProcalMethod::kNone: return "none";
    case ProcalMethod::kDensityRatio: return "density-ratio";
    case ProcalMethod::kBinMeanShift: return "bin-mean-shift";
  }
  return "unknown";
}

BaseMethod parse_base_method(std::string_view name) {
  if (name == "conf") return BaseMethod::kConf;
  if (name == "ts") return BaseMethod::kTemperature;
  if (name == "hb") return BaseMethod::kHistogram;
  if (name == "ir") return BaseMethod::kIsotonic;
  throw Error(ErrorCode::kInvalidArgument, "unknown base method '" + std::string(name) + "'");
}

ProcalMethod parse_procal_method(std::string_view name) {
  if (name == "none") return ProcalMethod::kNone;
  if (name == "density-ratio") return ProcalMethod::kDensityRatio;
  if (name == "bin-mean-shift") return ProcalMethod::kBinMeanShift;
  throw Error(ErrorCode::kInvalidArgument, "unknown proximity stage '" + std::string(name) + "'");
}

CalibrationPipeline CalibrationPipeline::fit(const PredictionSet& calibration,
                                             std::span<const double> proximity,
                                             const PipelineOptions& options) {
  CalibrationPipeline pipeline;
  pipeline.options_ = options;
  const std::vector<std::uint8_t> correct = calibration.correctness();
  switch (options.base) {
    case BaseMethod::kConf: break;
    case BaseMethod::kTemperature: pipeline.base_ = fit_temperature(calibration); break;
    case BaseMethod::kHistogram:
      pipeline.base_ = fit_histogram_binning(calibration.confidence, correct, options.histogram_bins);
      break;
    case BaseMethod::kIsotonic:
      pipeline.base_ = fit_isotonic(calibration.confidence, correct);
      break;
  }
  if (const auto* ts = std::get_if<TemperatureModel>(&pipeline.base_); ts && ts->degenerate) {
    pipeline.warnings_.emplace_back(
        "temperature scaling: every logit row is constant, using T = 1");
  }

  const bool discrete_base =
      options.base == BaseMethod::kHistogram || options.base == BaseMethod::kIsotonic;
  if (options.procal == ProcalMethod::kDensityRatio && discrete_base) {
    pipeline.warnings_.emplace_back(
        "density-ratio calibration over a discrete-output base calibrator; bin-mean-shift is "
        "the matching stage");
  }
  if (options.procal == ProcalMethod::kBinMeanShift && !discrete_base) {
    pipeline.warnings_.emplace_back(
        "bin-mean-shift over a continuous-output base calibrator; density-ratio is the matching "
        "stage");
  }
  if (options.procal == ProcalMethod::kNone) return pipeline;

  require(proximity.size() == calibration.size(), ErrorCode::kMissingProximity,
          "proximity values are required for the proximity-informed stage");
  const std::vector<double> base_conf = pipeline.base_confidence(calibration);
  if (options.procal == ProcalMethod::kDensityRatio) {
    pipeline.procal_ = fit_density_ratio(base_conf, proximity, correct);
  } else {
    pipeline.procal_ = fit_bin_mean_shift(base_conf, proximity, correct, options.shift_conf_bins,
                                          options.shift_prox_bins, options.lambda);
  }
  return pipeline;
}

CalibrationPipeline CalibrationPipeline::from_models(const PipelineOptions& options,
                                                     BaseModel base, ProcalModel procal) {
  CalibrationPipeline pipeline;
  pipeline.options_ = options;
  pipeline.base_ = std::move(base);
  pipeline.procal_ = std::move(procal);
  return pipeline;
}

std::vector<double> CalibrationPipeline::base_confidence(const PredictionSet& preds) const {
  if (const auto* ts = std::get_if<TemperatureModel>(&base_)) return apply_temperature(*ts, preds);
  std::vector<double> out = preds.confidence;
  if (const auto* map = std::get_if<MonotoneMap>(&base_)) {
    for (double& c : out) c = (*map)(c);
  }
  return out;
}

std::vector<double> CalibrationPipeline::apply_stage(std::span<const double> base_conf,
                                                     std::span<const double> proximity) const {
  std::vector<double> out(base_conf.begin(), base_conf.end());
  if (std::holds_alternative<std::monostate>(procal_)) return out;
  require(proximity.size() == base_conf.size(), ErrorCode::kMissingProximity,
          "proximity values are required for the proximity-informed stage");
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = std::visit(
          [&](const auto& model) -> double {
            if constexpr (std::is_same_v<std::decay_t<decltype(model)>, std::monostate>) {
              return base_conf[i];
            } else {
              return model(base_conf[i], proximity[i]);
            }
          },
          procal_);
    }
  });
  return out;
}

std::vector<double> CalibrationPipeline::apply(const PredictionSet& preds,
                                               std::span<const double> proximity) const {
  return apply_stage(base_confidence(preds), proximity);
}

}  // namespace procal
