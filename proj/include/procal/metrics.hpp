#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace procal {

// Non-owning view of per-sample (confidence, correctness, proximity) triples.
// proximity may be empty when no proximity-aware metric is requested.
struct EvalTriples {
  std::span<const double> confidence;
  std::span<const std::uint8_t> correct;
  std::span<const double> proximity = {};

  std::size_t size() const { return confidence.size(); }
  bool has_proximity() const { return !proximity.empty(); }
};

enum class BinScheme { kEqualWidth, kEqualMass, kConfProximity };

std::string_view to_string(BinScheme scheme);
BinScheme parse_bin_scheme(std::string_view name);

struct Bin {
  double conf_lo = 0.0;
  double conf_hi = 0.0;
  std::optional<double> prox_lo;
  std::optional<double> prox_hi;
  std::size_t count = 0;
  double mean_conf = 0.0;
  double accuracy = 0.0;
  double mean_sq_err = 0.0;  // mean of (confidence - correct)^2 within the bin

  double gap() const { return accuracy - mean_conf; }
};

struct BinTable {
  BinScheme scheme = BinScheme::kEqualWidth;
  std::vector<Bin> bins;

  std::size_t total() const;
  // Sum over bins of (count / total) * |gap|; empty bins contribute 0.
  double weighted_gap() const;
  // Largest |gap| over non-empty bins.
  double max_gap() const;
  // Count-weighted mean of mean_sq_err; equals the Brier score of the table's samples.
  double brier() const;
};

inline constexpr std::size_t kDefaultMetricBins = 15;
inline constexpr std::size_t kDefaultProximityBins = 10;

// Equal-width bins on [0, 1]; a confidence on a bin edge belongs to the
// higher bin, and 1.0 to the last bin.
double ece(const EvalTriples& t, std::size_t bins = kDefaultMetricBins);
// Equal-mass bins over confidence sorted stably (ties keep input order).
double ace(const EvalTriples& t, std::size_t bins = kDefaultMetricBins);
double mce(const EvalTriples& t, std::size_t bins = kDefaultMetricBins);
// Equal-mass confidence bins, each split into equal-mass proximity bins.
double piece(const EvalTriples& t, std::size_t conf_bins = kDefaultMetricBins,
             std::size_t prox_bins = kDefaultProximityBins);
// Mean squared difference between confidence and the correctness indicator.
double brier(const EvalTriples& t);

BinTable reliability_table(const EvalTriples& t, BinScheme scheme,
                           std::size_t conf_bins = kDefaultMetricBins,
                           std::size_t prox_bins = kDefaultProximityBins);

// CSV columns: scheme,bin_lo,bin_hi,prox_lo,prox_hi,count,mean_conf,accuracy,gap,mean_sq_err
void write_bin_tables_csv(std::span<const BinTable> tables, const std::filesystem::path& path);
std::vector<BinTable> read_bin_tables_csv(const std::filesystem::path& path);

}  // namespace procal
