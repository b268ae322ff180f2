#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/bias_analysis.hpp"
#include "procal/metrics.hpp"
#include "procal/procal_core.hpp"
#include "procal/proximity_index.hpp"
#include "procal/synth.hpp"

namespace procal {

inline constexpr int kReportSchemaVersion = 1;

enum class Command { kCalibrate, kEvaluate, kBiasTest, kSynth };

std::string_view to_string(Command command);

struct RunConfig {
  Command command = Command::kEvaluate;

  std::filesystem::path preds;
  std::filesystem::path embs;
  std::filesystem::path ref_embs;
  // Optional separate evaluation set for calibrate; otherwise preds is split.
  std::filesystem::path eval_preds;
  std::filesystem::path eval_embs;
  // Report path, or the file prefix for synth.
  std::filesystem::path out;
  // Optional JSON dump of the fitted calibrate pipeline.
  std::filesystem::path model_out;

  BaseMethod base = BaseMethod::kConf;
  ProcalMethod procal = ProcalMethod::kNone;
  std::size_t k = kDefaultNeighbors;
  DistanceMetric distance = DistanceMetric::kEuclidean;
  // Requested metrics among ece, ace, mce, piece, brier. Empty means every
  // metric the inputs allow.
  std::vector<std::string> metrics;
  std::size_t metric_bins = kDefaultMetricBins;
  std::size_t piece_conf_bins = kDefaultMetricBins;
  std::size_t piece_prox_bins = kDefaultProximityBins;
  std::size_t bms_conf_bins = kDefaultShiftConfBins;
  std::size_t bms_prox_bins = kDefaultShiftProxBins;
  double lambda = kDefaultShrinkage;
  std::size_t groups = kDefaultGroups;
  std::size_t n_draw = kDefaultDraws;
  double max_diff = kDefaultMaxConfDiff;
  double split = 0.5;
  std::uint64_t seed = kDefaultSeed;

  SynthKind kind = SynthKind::kExample1;
  std::size_t n = 10000;

  // Throws kMissingInput or kInvalidArgument.
  void validate() const;
  nlohmann::json to_json() const;
};

// Each run_* computes its report and writes every output file at the end.
// Returned reports carry a "timings_ms" block that varies between runs.
nlohmann::json run_calibrate(const RunConfig& cfg);
nlohmann::json run_evaluate(const RunConfig& cfg);
nlohmann::json run_bias_test(const RunConfig& cfg);
nlohmann::json run_synth(const RunConfig& cfg);
nlohmann::json run(const RunConfig& cfg);

// Metric block for one set of confidences, plus the bin tables it came from.
struct MetricReport {
  nlohmann::json metrics;
  std::vector<BinTable> tables;
};

MetricReport evaluate_metrics(const EvalTriples& triples, const RunConfig& cfg);

nlohmann::json to_json(const BiasTestResult& result);

// Report with the "timings_ms" block removed, for determinism checks.
nlohmann::json without_timings(nlohmann::json report);

}  // namespace procal
