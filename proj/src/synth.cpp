#include "procal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "procal/bias_analysis.hpp"
#include "procal/error.hpp"
#include "procal/proximity_index.hpp"

namespace procal {
namespace {

constexpr int kSynthClasses = 10;
constexpr double kSquareGap = 1000.0;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(std::mt19937_64& rng) {
  double u = uniform01(rng);
  while (u == 0.0) u = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * uniform01(rng));
}

bool bernoulli(std::mt19937_64& rng, double p) { return uniform01(rng) < p; }

// Mean over k = 1..K of E[distance to the k-th neighbor] * sqrt(pi * rho) for
// a planar Poisson process, i.e. Gamma(k + 1/2) / Gamma(k).
double knn_distance_constant(std::size_t k) {
  double sum = 0.0;
  for (std::size_t j = 1; j <= k; ++j) {
    const auto x = static_cast<double>(j);
    sum += std::exp(std::lgamma(x + 0.5) - std::lgamma(x));
  }
  return sum / static_cast<double>(k);
}

// Planar density at which the mean 10-NN distance equals -log(target).
double density_for_proximity(double target) {
  const double c = knn_distance_constant(kDefaultNeighbors) / std::log(1.0 / target);
  return c * c / std::numbers::pi;
}

// Appends one prediction whose softmax confidence over `classes` equals conf.
void add_prediction(PredictionSet& preds, std::mt19937_64& rng, std::int64_t id, double conf,
                    bool correct) {
  const int classes = preds.num_classes;
  const auto pred = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(classes)));
  std::vector<double> row(static_cast<std::size_t>(classes), 0.0);
  row[static_cast<std::size_t>(pred)] = std::log(conf * (classes - 1) / (1.0 - conf));
  const int other =
      (pred + 1 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(classes - 1)))) %
      classes;
  const SoftmaxResult sm = softmax_confidence(row);
  preds.sample_id.push_back(id);
  preds.pred_label.push_back(sm.label);
  preds.true_label.push_back(correct ? sm.label : other);
  preds.confidence.push_back(sm.confidence);
  preds.logits.insert(preds.logits.end(), row.begin(), row.end());
}

// Isotropic planar Gaussian scaled so that, with n reference points, proximity
// at the mode is about 0.6 and falls off smoothly into the tails.
EmbeddingMatrix gaussian_cloud(std::mt19937_64& rng, std::size_t n, std::int64_t first_id) {
  const double scale = std::sqrt(static_cast<double>(n) /
                                 (2.0 * std::numbers::pi * density_for_proximity(0.6)));
  EmbeddingMatrix m;
  m.dim = 2;
  m.values.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    m.values.push_back(static_cast<float>(scale * standard_normal(rng)));
    m.values.push_back(static_cast<float>(scale * standard_normal(rng)));
    m.sample_id.push_back(first_id + static_cast<std::int64_t>(i));
  }
  return m;
}

// Proximity rank quantile of every sample, in [0, 1].
std::vector<double> proximity_quantiles(const EmbeddingMatrix& embs,
                                        const EmbeddingMatrix& reference) {
  const auto index = ProximityIndex::build(reference);
  const auto prox = index.proximities(embs, kDefaultNeighbors);
  std::vector<std::size_t> order(prox.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return prox[a] < prox[b]; });
  std::vector<double> q(prox.size());
  const auto denom = static_cast<double>(prox.size() - 1);
  for (std::size_t r = 0; r < order.size(); ++r) q[order[r]] = static_cast<double>(r) / denom;
  return q;
}

SynthData make_example1(std::size_t n, std::mt19937_64& rng) {
  const double sparse_side = std::sqrt(static_cast<double>(n / 2) / density_for_proximity(0.2));
  const double dense_side =
      std::sqrt(static_cast<double>(n - n / 2) / density_for_proximity(0.8));
  const double dense_x0 = sparse_side + kSquareGap;
  auto place = [&](EmbeddingMatrix& m, bool dense, std::int64_t id) {
    const double side = dense ? dense_side : sparse_side;
    const double x0 = dense ? dense_x0 : 0.0;
    m.values.push_back(static_cast<float>(x0 + side * uniform01(rng)));
    m.values.push_back(static_cast<float>(side * uniform01(rng)));
    m.sample_id.push_back(id);
  };

  SynthData data;
  data.reference.dim = 2;
  for (std::size_t i = 0; i < n; ++i) {
    place(data.reference, i >= n / 2, static_cast<std::int64_t>(n + i));
  }
  data.embs.dim = 2;
  data.preds.num_classes = kSynthClasses;
  for (std::size_t i = 0; i < n; ++i) {
    const bool dense = bernoulli(rng, 0.5);
    place(data.embs, dense, static_cast<std::int64_t>(i));
    add_prediction(data.preds, rng, static_cast<std::int64_t>(i), 0.7,
                   bernoulli(rng, dense ? 0.9 : 0.5));
  }
  return data;
}

SynthData make_confidence_population(std::size_t n, std::mt19937_64& rng, bool biased) {
  SynthData data;
  data.embs = gaussian_cloud(rng, n, 0);
  data.reference = gaussian_cloud(rng, n, static_cast<std::int64_t>(n));
  const auto q = proximity_quantiles(data.embs, data.reference);
  data.preds.num_classes = kSynthClasses;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = 0.4 + 0.55 * uniform01(rng);
    const double p = biased ? std::clamp(c + 0.3 * (q[i] - 0.5), 0.01, 0.99) : c;
    add_prediction(data.preds, rng, static_cast<std::int64_t>(i), c, bernoulli(rng, p));
  }
  return data;
}

SynthData make_binary_brier(std::size_t n, std::mt19937_64& rng) {
  SynthData data;
  data.embs = gaussian_cloud(rng, n, 0);
  data.reference = gaussian_cloud(rng, n, static_cast<std::int64_t>(n));
  const auto q = proximity_quantiles(data.embs, data.reference);
  PredictionSet& preds = data.preds;
  preds.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double row[2] = {0.0, 2.0 * standard_normal(rng)};
    const SoftmaxResult sm = softmax_confidence(row);
    const double p = std::clamp(sm.confidence - 0.03 - 0.2 * (1.0 - q[i]), 0.01, 0.99);
    const bool correct = bernoulli(rng, p);
    preds.sample_id.push_back(static_cast<std::int64_t>(i));
    preds.pred_label.push_back(sm.label);
    preds.true_label.push_back(correct ? sm.label : 1 - sm.label);
    preds.confidence.push_back(sm.confidence);
    preds.logits.insert(preds.logits.end(), row, row + 2);
  }
  return data;
}

}  // namespace

std::string_view to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::kExample1: return "example1";
    case SynthKind::kBiased: return "biased";
    case SynthKind::kUnbiased: return "unbiased";
    case SynthKind::kBinaryBrier: return "binary-brier";
  }
  return "unknown";
}

SynthKind parse_synth_kind(std::string_view name) {
  if (name == "example1") return SynthKind::kExample1;
  if (name == "biased") return SynthKind::kBiased;
  if (name == "unbiased") return SynthKind::kUnbiased;
  if (name == "binary-brier") return SynthKind::kBinaryBrier;
  throw Error(ErrorCode::kInvalidArgument, "unknown synth kind '" + std::string(name) + "'");
}

SynthData synth_generate(SynthKind kind, std::size_t n, std::uint64_t seed) {
  require(n >= kMinSynthSamples, ErrorCode::kInvalidArgument,
          "synth needs n >= " + std::to_string(kMinSynthSamples));
  std::mt19937_64 rng(seed);
  switch (kind) {
    case SynthKind::kExample1: return make_example1(n, rng);
    case SynthKind::kBiased: return make_confidence_population(n, rng, true);
    case SynthKind::kUnbiased: return make_confidence_population(n, rng, false);
    case SynthKind::kBinaryBrier: return make_binary_brier(n, rng);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown synth kind");
}

SynthPaths synth_paths(const std::filesystem::path& prefix) {
  const std::string base = prefix.string();
  return {base + ".preds.csv", base + ".embs.bin", base + ".ref.bin"};
}

SynthPaths write_synth(const SynthData& data, const std::filesystem::path& prefix) {
  const SynthPaths paths = synth_paths(prefix);
  write_prediction_table(data.preds, paths.preds);
  write_embeddings_binary(data.embs, paths.embs);
  write_embeddings_binary(data.reference, paths.reference);
  return paths;
}

}  // namespace procal
