#include "procal/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "procal/error.hpp"

namespace procal {
namespace {

void check_triples(const EvalTriples& t) {
  require(t.size() >= 1, ErrorCode::kInsufficientData, "no samples to evaluate");
  require(t.correct.size() == t.size(), ErrorCode::kInvalidArgument,
          "confidence and correctness arrays differ in length");
  require(t.proximity.empty() || t.proximity.size() == t.size(), ErrorCode::kInvalidArgument,
          "proximity array differs in length");
}

// Accumulates one bin from a list of sample indices.
Bin summarize(const EvalTriples& t, std::span<const std::size_t> members) {
  Bin bin;
  bin.count = members.size();
  if (members.empty()) return bin;
  double conf_sum = 0.0;
  double sq_sum = 0.0;
  std::size_t hits = 0;
  bin.conf_lo = t.confidence[members.front()];
  bin.conf_hi = bin.conf_lo;
  for (std::size_t i : members) {
    conf_sum += t.confidence[i];
    hits += t.correct[i] ? 1 : 0;
    const double diff = t.confidence[i] - (t.correct[i] ? 1.0 : 0.0);
    sq_sum += diff * diff;
    bin.conf_lo = std::min(bin.conf_lo, t.confidence[i]);
    bin.conf_hi = std::max(bin.conf_hi, t.confidence[i]);
  }
  const auto count = static_cast<double>(members.size());
  bin.mean_conf = conf_sum / count;
  bin.accuracy = static_cast<double>(hits) / count;
  bin.mean_sq_err = sq_sum / count;
  return bin;
}

// Contiguous chunk k of m equal-mass chunks over n items: sizes differ by <= 1.
std::pair<std::size_t, std::size_t> chunk_bounds(std::size_t n, std::size_t m, std::size_t k) {
  return {k * n / m, (k + 1) * n / m};
}

std::vector<std::size_t> stable_order_by(std::span<const double> key,
                                         std::span<const std::size_t> rows) {
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return order;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

BinTable equal_width_table(const EvalTriples& t, std::size_t m) {
  require(m >= 1, ErrorCode::kInvalidArgument, "number of bins must be >= 1");
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double c = t.confidence[i];
    auto b = static_cast<std::size_t>(std::max(0.0, std::floor(c * static_cast<double>(m))));
    members[std::min(b, m - 1)].push_back(i);
  }
  BinTable table{BinScheme::kEqualWidth, {}};
  table.bins.reserve(m);
  for (std::size_t b = 0; b < m; ++b) {
    Bin bin = summarize(t, members[b]);
    bin.conf_lo = static_cast<double>(b) / static_cast<double>(m);
    bin.conf_hi = static_cast<double>(b + 1) / static_cast<double>(m);
    table.bins.push_back(bin);
  }
  return table;
}

BinTable equal_mass_table(const EvalTriples& t, std::size_t m) {
  require(m >= 1, ErrorCode::kInvalidArgument, "number of bins must be >= 1");
  require(t.size() >= m, ErrorCode::kInsufficientData,
          "equal-mass binning needs n >= M (n=" + std::to_string(t.size()) +
              ", M=" + std::to_string(m) + ")");
  const auto order = stable_order_by(t.confidence, all_rows(t.size()));
  BinTable table{BinScheme::kEqualMass, {}};
  table.bins.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    auto [lo, hi] = chunk_bounds(order.size(), m, k);
    table.bins.push_back(summarize(t, std::span(order).subspan(lo, hi - lo)));
  }
  return table;
}

BinTable conf_proximity_table(const EvalTriples& t, std::size_t m, std::size_t h) {
  if (!t.has_proximity()) {
    throw Error(ErrorCode::kMissingProximity, "proximity-informed binning needs proximity values");
  }
  require(m >= 1 && h >= 1, ErrorCode::kInvalidArgument, "number of bins must be >= 1");
  require(t.size() >= m * h, ErrorCode::kInsufficientData,
          "proximity-informed binning needs n >= M*H (n=" + std::to_string(t.size()) +
              ", M*H=" + std::to_string(m * h) + ")");
  const auto by_conf = stable_order_by(t.confidence, all_rows(t.size()));
  BinTable table{BinScheme::kConfProximity, {}};
  table.bins.reserve(m * h);
  for (std::size_t k = 0; k < m; ++k) {
    auto [lo, hi] = chunk_bounds(by_conf.size(), m, k);
    const auto stripe = std::span(by_conf).subspan(lo, hi - lo);
    const Bin stripe_bin = summarize(t, stripe);
    // Stable within the stripe: equal proximities keep confidence order.
    const auto by_prox = stable_order_by(t.proximity, stripe);
    for (std::size_t j = 0; j < h; ++j) {
      auto [plo, phi] = chunk_bounds(by_prox.size(), h, j);
      const auto cell = std::span(by_prox).subspan(plo, phi - plo);
      Bin bin = summarize(t, cell);
      bin.conf_lo = stripe_bin.conf_lo;
      bin.conf_hi = stripe_bin.conf_hi;
      bin.prox_lo = t.proximity[cell.front()];
      bin.prox_hi = t.proximity[cell.back()];
      table.bins.push_back(bin);
    }
  }
  return table;
}

void append_real(std::string& out, double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

double parse_real(std::string_view field) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kMalformedRow, "bad number in bin table: '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(BinScheme scheme) {
  switch (scheme) {
    case BinScheme::kEqualWidth: return "equal-width";
    case BinScheme::kEqualMass: return "equal-mass";
    case BinScheme::kConfProximity: return "conf-proximity";
  }
  return "unknown";
}

BinScheme parse_bin_scheme(std::string_view name) {
  if (name == "equal-width") return BinScheme::kEqualWidth;
  if (name == "equal-mass") return BinScheme::kEqualMass;
  if (name == "conf-proximity") return BinScheme::kConfProximity;
  throw Error(ErrorCode::kInvalidArgument, "unknown bin scheme '" + std::string(name) + "'");
}

std::size_t BinTable::total() const {
  std::size_t n = 0;
  for (const Bin& b : bins) n += b.count;
  return n;
}

double BinTable::weighted_gap() const {
  const auto n = static_cast<double>(total());
  if (n == 0.0) return 0.0;
  double acc = 0.0;
  for (const Bin& b : bins) {
    if (b.count == 0) continue;
    acc += static_cast<double>(b.count) / n * std::abs(b.gap());
  }
  return acc;
}

double BinTable::max_gap() const {
  double worst = 0.0;
  for (const Bin& b : bins) {
    if (b.count > 0) worst = std::max(worst, std::abs(b.gap()));
  }
  return worst;
}

double BinTable::brier() const {
  const auto n = static_cast<double>(total());
  if (n == 0.0) return 0.0;
  double acc = 0.0;
  for (const Bin& b : bins) acc += static_cast<double>(b.count) * b.mean_sq_err;
  return acc / n;
}

BinTable reliability_table(const EvalTriples& t, BinScheme scheme, std::size_t conf_bins,
                           std::size_t prox_bins) {
  check_triples(t);
  switch (scheme) {
    case BinScheme::kEqualWidth: return equal_width_table(t, conf_bins);
    case BinScheme::kEqualMass: return equal_mass_table(t, conf_bins);
    case BinScheme::kConfProximity: return conf_proximity_table(t, conf_bins, prox_bins);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown bin scheme");
}

double ece(const EvalTriples& t, std::size_t bins) {
  return reliability_table(t, BinScheme::kEqualWidth, bins).weighted_gap();
}

double ace(const EvalTriples& t, std::size_t bins) {
  return reliability_table(t, BinScheme::kEqualMass, bins).weighted_gap();
}

double mce(const EvalTriples& t, std::size_t bins) {
  return reliability_table(t, BinScheme::kEqualWidth, bins).max_gap();
}

double piece(const EvalTriples& t, std::size_t conf_bins, std::size_t prox_bins) {
  return reliability_table(t, BinScheme::kConfProximity, conf_bins, prox_bins).weighted_gap();
}

double brier(const EvalTriples& t) {
  check_triples(t);
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double diff = t.confidence[i] - (t.correct[i] ? 1.0 : 0.0);
    acc += diff * diff;
  }
  return acc / static_cast<double>(t.size());
}

void write_bin_tables_csv(std::span<const BinTable> tables, const std::filesystem::path& path) {
  std::string out = "scheme,bin_lo,bin_hi,prox_lo,prox_hi,count,mean_conf,accuracy,gap,mean_sq_err\n";
  for (const BinTable& table : tables) {
    for (const Bin& b : table.bins) {
      out += to_string(table.scheme);
      out += ',';
      append_real(out, b.conf_lo);
      out += ',';
      append_real(out, b.conf_hi);
      out += ',';
      if (b.prox_lo) append_real(out, *b.prox_lo);
      out += ',';
      if (b.prox_hi) append_real(out, *b.prox_hi);
      out += ',';
      out += std::to_string(b.count);
      out += ',';
      append_real(out, b.mean_conf);
      out += ',';
      append_real(out, b.accuracy);
      out += ',';
      append_real(out, b.gap());
      out += ',';
      append_real(out, b.mean_sq_err);
      out += '\n';
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  file << out;
  if (!file) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<BinTable> read_bin_tables_csv(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(file, line) ||
      line != "scheme,bin_lo,bin_hi,prox_lo,prox_hi,count,mean_conf,accuracy,gap,mean_sq_err") {
    throw Error(ErrorCode::kMalformedHeader, "unexpected bin table header");
  }
  std::vector<BinTable> tables;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 10) throw Error(ErrorCode::kMalformedRow, "bin table row needs 10 fields");
    const BinScheme scheme = parse_bin_scheme(fields[0]);
    // A new table starts whenever the scheme changes or an equal-width table restarts at 0.
    if (tables.empty() || tables.back().scheme != scheme ||
        (scheme == BinScheme::kEqualWidth && parse_real(fields[1]) == 0.0)) {
      tables.push_back(BinTable{scheme, {}});
    }
    Bin b;
    b.conf_lo = parse_real(fields[1]);
    b.conf_hi = parse_real(fields[2]);
    if (!fields[3].empty()) b.prox_lo = parse_real(fields[3]);
    if (!fields[4].empty()) b.prox_hi = parse_real(fields[4]);
    b.count = static_cast<std::size_t>(std::stoull(fields[5]));
    b.mean_conf = parse_real(fields[6]);
    b.accuracy = parse_real(fields[7]);
    b.mean_sq_err = parse_real(fields[9]);
    tables.back().bins.push_back(b);
  }
  return tables;
}

}  // namespace procal
