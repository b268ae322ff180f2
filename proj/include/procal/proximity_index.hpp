#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "procal/dataset_io.hpp"

namespace procal {

enum class DistanceMetric { kEuclidean, kCosine };

std::string_view to_string(DistanceMetric metric);
DistanceMetric parse_distance_metric(std::string_view name);

inline constexpr std::size_t kDefaultNeighbors = 10;

// Exact k-nearest-neighbour structure over a reference embedding set.
//
// Euclidean queries in low dimension go through a k-d tree, everything else
// through a flat scan; both return the true nearest neighbours. Distances are
// accumulated in double precision from per-coordinate differences.
//
// The index is immutable after build and safe to query from many threads.
class ProximityIndex {
 public:
  enum class Backend { kAuto, kFlat, kKdTree };

  static ProximityIndex build(const EmbeddingMatrix& reference,
                              DistanceMetric metric = DistanceMetric::kEuclidean,
                              Backend backend = Backend::kAuto);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  DistanceMetric metric() const { return metric_; }
  Backend backend() const { return backend_; }
  bool contains_id(std::int64_t id) const;

  // The k smallest distances, ascending. The reference row whose id equals
  // exclude_id (if any) is never returned.
  std::vector<double> query_knn(std::span<const double> query, std::size_t k,
                                std::optional<std::int64_t> exclude_id = std::nullopt) const;
  std::vector<double> query_knn(std::span<const float> query, std::size_t k,
                                std::optional<std::int64_t> exclude_id = std::nullopt) const;

  // exp(-mean of the k nearest distances), in (0, 1].
  double proximity(std::span<const double> query, std::size_t k,
                   std::optional<std::int64_t> exclude_id = std::nullopt) const;

  // Proximity of every row of queries. A query whose id also names a
  // reference row is measured with that row excluded.
  std::vector<double> proximities(const EmbeddingMatrix& queries,
                                  std::size_t k = kDefaultNeighbors) const;

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t split_dim = 0;
    double split_value = 0.0;
  };

  class NeighborHeap;

  std::size_t check_query(std::size_t query_dim, std::size_t k,
                          std::optional<std::int64_t> exclude_id) const;
  void scan_flat(std::span<const double> query, std::optional<std::size_t> skip,
                 NeighborHeap& heap) const;
  void search_tree(std::int32_t node, std::span<const double> query,
                   std::optional<std::size_t> skip, NeighborHeap& heap) const;
  std::int32_t build_tree(std::vector<std::uint32_t>& order, std::uint32_t begin,
                          std::uint32_t end);
  double squared_distance(std::span<const double> query, std::size_t row) const;

  std::size_t dim_ = 0;
  DistanceMetric metric_ = DistanceMetric::kEuclidean;
  Backend backend_ = Backend::kFlat;
  std::vector<double> points_;  // row-major; unit-normalised for cosine
  std::vector<std::int64_t> ids_;
  std::unordered_map<std::int64_t, std::size_t> row_of_id_;
  std::vector<Node> nodes_;
};

}  // namespace procal
