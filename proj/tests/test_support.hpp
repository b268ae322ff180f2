#pragma once

// Independent reference implementations used as oracles by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "procal/dataset_io.hpp"

namespace procal::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("procal_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline std::size_t uniform_int(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline double gaussian(std::mt19937_64& rng) {
  double u = uniform(rng);
  while (u == 0.0) u = uniform(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * uniform(rng));
}

inline EmbeddingMatrix random_embeddings(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                         std::int64_t first_id = 0) {
  EmbeddingMatrix m;
  m.dim = d;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m.values.push_back(static_cast<float>(gaussian(rng)));
    m.sample_id.push_back(first_id + static_cast<std::int64_t>(i));
  }
  return m;
}

// All Euclidean distances from query to the reference rows, ascending, first k.
inline std::vector<double> brute_knn(const EmbeddingMatrix& ref, std::span<const double> query,
                                     std::size_t k, std::int64_t exclude_id = -1) {
  std::vector<double> d;
  for (std::size_t i = 0; i < ref.rows(); ++i) {
    if (ref.sample_id[i] == exclude_id) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < ref.dim; ++j) {
      const double diff = static_cast<double>(ref.row(i)[j]) - query[j];
      s += diff * diff;
    }
    d.push_back(std::sqrt(s));
  }
  std::sort(d.begin(), d.end());
  d.resize(std::min(k, d.size()));
  return d;
}

// Plain product-Gaussian kernel sum in extended precision.
inline double kde_direct(std::span<const double> conf, std::span<const double> prox, double bw_c,
                         double bw_d, double qc, double qd) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const long double u = (static_cast<long double>(conf[i]) - qc) / bw_c;
    const long double v = (static_cast<long double>(prox[i]) - qd) / bw_d;
    sum += std::exp(-0.5L * (u * u + v * v));
  }
  return static_cast<double>(sum / (2.0L * std::numbers::pi_v<long double> * bw_c * bw_d *
                                    static_cast<long double>(conf.size())));
}

inline double sample_sd(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Least-squares non-decreasing fit by enumerating every partition of the
// sorted tie-blocks into consecutive segments. Returns the fitted value per
// input sample.
inline std::vector<double> isotonic_exhaustive(std::span<const double> x,
                                               std::span<const std::uint8_t> y) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> bsum, bw;
  std::vector<std::size_t> block_of(x.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t i = order[r];
    if (r == 0 || x[i] != x[order[r - 1]]) {
      bsum.push_back(0.0);
      bw.push_back(0.0);
    }
    bsum.back() += y[i] ? 1.0 : 0.0;
    bw.back() += 1.0;
    block_of[i] = bsum.size() - 1;
  }
  const std::size_t nb = bsum.size();
  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<double> best_fit;
  for (std::uint32_t mask = 0; mask < (1u << (nb - 1)); ++mask) {
    std::vector<double> fit(nb);
    double prev = -1.0;
    bool ok = true;
    std::size_t start = 0;
    for (std::size_t b = 0; b < nb && ok; ++b) {
      const bool cut = b == nb - 1 || ((mask >> b) & 1u);
      if (!cut) continue;
      double s = 0.0, w = 0.0;
      for (std::size_t t = start; t <= b; ++t) {
        s += bsum[t];
        w += bw[t];
      }
      const double mean = s / w;
      if (mean < prev - 1e-15) ok = false;
      for (std::size_t t = start; t <= b; ++t) fit[t] = mean;
      prev = mean;
      start = b + 1;
    }
    if (!ok) continue;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = (y[i] ? 1.0 : 0.0) - fit[block_of[i]];
      sse += r * r;
    }
    if (sse < best_sse - 1e-12) {
      best_sse = sse;
      best_fit = fit;
    }
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = best_fit[block_of[i]];
  return out;
}

// Two-sided permutation p-value for a difference in means of two binary
// samples: the fraction of random relabelings whose |mean difference| is at
// least the observed one.
inline double permutation_p_value(std::span<const double> a, std::span<const double> b,
                                  std::size_t resamples, std::uint64_t seed) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  auto stat = [&](double sum_a) { return std::abs(sum_a / na - (total - sum_a) / nb); };
  const double observed = stat(std::accumulate(a.begin(), a.end(), 0.0));
  std::mt19937_64 rng(seed);
  std::size_t extreme = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    double sum_a = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (pooled.size() - i));
      std::swap(pooled[i], pooled[j]);
      sum_a += pooled[i];
    }
    if (stat(sum_a) >= observed - 1e-12) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(resamples);
}

// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
inline double ks_uniform_distance(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const auto n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - p[i]);
    d = std::max(d, p[i] - static_cast<double>(i) / n);
  }
  return d;
}

}  // namespace procal::testing
