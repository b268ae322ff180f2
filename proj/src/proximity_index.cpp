#include "procal/proximity_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "procal/error.hpp"
#include "procal/parallel.hpp"

namespace procal {
namespace {

constexpr std::uint32_t kLeafSize = 16;
constexpr std::size_t kMaxTreeDim = 16;

}  // namespace

std::string_view to_string(DistanceMetric metric) {
  return metric == DistanceMetric::kEuclidean ? "euclidean" : "cosine";
}

DistanceMetric parse_distance_metric(std::string_view name) {
  if (name == "euclidean" || name == "l2") return DistanceMetric::kEuclidean;
  if (name == "cosine") return DistanceMetric::kCosine;
  throw Error(ErrorCode::kInvalidArgument, "unknown distance metric '" + std::string(name) + "'");
}

// Bounded max-heap keeping the k smallest keys seen so far.
class ProximityIndex::NeighborHeap {
 public:
  explicit NeighborHeap(std::size_t k) : k_(k) { keys_.reserve(k); }

  double worst() const {
    return keys_.size() < k_ ? std::numeric_limits<double>::infinity() : keys_.front();
  }

  void offer(double key) {
    if (keys_.size() < k_) {
      keys_.push_back(key);
      std::push_heap(keys_.begin(), keys_.end());
    } else if (key < keys_.front()) {
      std::pop_heap(keys_.begin(), keys_.end());
      keys_.back() = key;
      std::push_heap(keys_.begin(), keys_.end());
    }
  }

  std::vector<double> sorted() && {
    std::sort_heap(keys_.begin(), keys_.end());
    return std::move(keys_);
  }

 private:
  std::size_t k_;
  std::vector<double> keys_;
};

ProximityIndex ProximityIndex::build(const EmbeddingMatrix& reference, DistanceMetric metric,
                                     Backend backend) {
  validate(reference);
  if (reference.rows() < 2) {
    throw Error(ErrorCode::kReferenceTooSmall,
                "reference too small: need at least 2 rows, got " +
                    std::to_string(reference.rows()));
  }
  if (reference.rows() >= std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kInvalidArgument, "reference set too large");
  }
  ProximityIndex index;
  index.dim_ = reference.dim;
  index.metric_ = metric;
  if (backend == Backend::kAuto) {
    backend = metric == DistanceMetric::kEuclidean && reference.dim <= kMaxTreeDim &&
                      reference.rows() > 4 * kLeafSize
                  ? Backend::kKdTree
                  : Backend::kFlat;
  }
  if (backend == Backend::kKdTree && metric != DistanceMetric::kEuclidean) {
    throw Error(ErrorCode::kInvalidArgument, "k-d tree backend supports euclidean distance only");
  }
  index.backend_ = backend;

  const std::size_t n = reference.rows();
  const std::size_t d = reference.dim;
  std::vector<double> points(reference.values.begin(), reference.values.end());
  if (metric == DistanceMetric::kCosine) {
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm += points[i * d + j] * points[i * d + j];
      norm = std::sqrt(norm);
      // A zero vector stays zero: its cosine similarity to anything is 0.
      if (norm > 0.0) {
        for (std::size_t j = 0; j < d; ++j) points[i * d + j] /= norm;
      }
    }
  }

  if (backend == Backend::kKdTree) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    index.points_ = std::move(points);
    index.build_tree(order, 0, static_cast<std::uint32_t>(n));
    // Lay the points out in tree order.
    std::vector<double> permuted(n * d);
    index.ids_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(index.points_.begin() + static_cast<std::ptrdiff_t>(order[i] * d), d,
                  permuted.begin() + static_cast<std::ptrdiff_t>(i * d));
      index.ids_[i] = reference.sample_id[order[i]];
    }
    index.points_ = std::move(permuted);
  } else {
    index.points_ = std::move(points);
    index.ids_ = reference.sample_id;
  }
  index.row_of_id_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) index.row_of_id_.emplace(index.ids_[i], i);
  return index;
}

std::int32_t ProximityIndex::build_tree(std::vector<std::uint32_t>& order, std::uint32_t begin,
                                        std::uint32_t end) {
  const auto node_id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return node_id;

  std::uint32_t best_dim = 0;
  double best_spread = -1.0;
  for (std::uint32_t j = 0; j < dim_; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      const double v = points_[order[i] * dim_ + j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = j;
    }
  }
  if (best_spread <= 0.0) return node_id;  // all points identical: keep as a leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a * dim_ + best_dim] < points_[b * dim_ + best_dim];
                   });
  const double split = points_[order[mid] * dim_ + best_dim];
  const std::int32_t left = build_tree(order, begin, mid);
  const std::int32_t right = build_tree(order, mid, end);
  Node& node = nodes_[static_cast<std::size_t>(node_id)];
  node.left = left;
  node.right = right;
  node.split_dim = best_dim;
  node.split_value = split;
  return node_id;
}

bool ProximityIndex::contains_id(std::int64_t id) const { return row_of_id_.contains(id); }

double ProximityIndex::squared_distance(std::span<const double> query, std::size_t row) const {
  const double* p = points_.data() + row * dim_;
  double acc = 0.0;
  for (std::size_t j = 0; j < dim_; ++j) {
    const double diff = query[j] - p[j];
    acc += diff * diff;
  }
  return acc;
}

void ProximityIndex::scan_flat(std::span<const double> query, std::optional<std::size_t> skip,
                               NeighborHeap& heap) const {
  const std::size_t n = ids_.size();
  if (metric_ == DistanceMetric::kEuclidean) {
    for (std::size_t i = 0; i < n; ++i) {
      if (skip && *skip == i) continue;
      heap.offer(squared_distance(query, i));
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (skip && *skip == i) continue;
    const double* p = points_.data() + i * dim_;
    double dot = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) dot += query[j] * p[j];
    heap.offer(std::max(0.0, 1.0 - dot));
  }
}

void ProximityIndex::search_tree(std::int32_t node_id, std::span<const double> query,
                                 std::optional<std::size_t> skip, NeighborHeap& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.left < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      if (skip && *skip == i) continue;
      heap.offer(squared_distance(query, i));
    }
    return;
  }
  const double diff = query[node.split_dim] - node.split_value;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search_tree(near, query, skip, heap);
  if (diff * diff <= heap.worst()) search_tree(far, query, skip, heap);
}

std::size_t ProximityIndex::check_query(std::size_t query_dim, std::size_t k,
                                        std::optional<std::int64_t> exclude_id) const {
  if (query_dim != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dimension " + std::to_string(query_dim) + " != index dimension " +
                    std::to_string(dim_));
  }
  const bool excluding = exclude_id && contains_id(*exclude_id);
  const std::size_t available = ids_.size() - (excluding ? 1 : 0);
  if (k < 1 || k > available) {
    throw Error(ErrorCode::kInvalidArgument,
                "K=" + std::to_string(k) + " out of range [1, " + std::to_string(available) + "]");
  }
  return available;
}

std::vector<double> ProximityIndex::query_knn(std::span<const double> query, std::size_t k,
                                              std::optional<std::int64_t> exclude_id) const {
  check_query(query.size(), k, exclude_id);
  for (double v : query) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite query coordinate");
  }
  std::optional<std::size_t> skip;
  if (exclude_id) {
    if (auto it = row_of_id_.find(*exclude_id); it != row_of_id_.end()) skip = it->second;
  }

  std::vector<double> normalized;
  if (metric_ == DistanceMetric::kCosine) {
    normalized.assign(query.begin(), query.end());
    double norm = 0.0;
    for (double v : normalized) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : normalized) v /= norm;
    }
    query = normalized;
  }

  NeighborHeap heap(k);
  if (backend_ == Backend::kKdTree) {
    search_tree(0, query, skip, heap);
  } else {
    scan_flat(query, skip, heap);
  }
  std::vector<double> distances = std::move(heap).sorted();
  if (metric_ == DistanceMetric::kEuclidean) {
    for (double& d : distances) d = std::sqrt(d);
  }
  return distances;
}

std::vector<double> ProximityIndex::query_knn(std::span<const float> query, std::size_t k,
                                              std::optional<std::int64_t> exclude_id) const {
  const std::vector<double> widened(query.begin(), query.end());
  return query_knn(std::span<const double>(widened), k, exclude_id);
}

double ProximityIndex::proximity(std::span<const double> query, std::size_t k,
                                 std::optional<std::int64_t> exclude_id) const {
  const std::vector<double> distances = query_knn(query, k, exclude_id);
  const double mean = std::accumulate(distances.begin(), distances.end(), 0.0) /
                      static_cast<double>(distances.size());
  return std::exp(-mean);
}

std::vector<double> ProximityIndex::proximities(const EmbeddingMatrix& queries,
                                                std::size_t k) const {
  require(queries.dim == dim_, ErrorCode::kDimensionMismatch,
          "query embeddings have dimension " + std::to_string(queries.dim) +
              ", reference has " + std::to_string(dim_));
  std::vector<double> out(queries.rows());
  parallel_for(queries.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> row(dim_);
    for (std::size_t i = begin; i < end; ++i) {
      auto q = queries.row(i);
      std::copy(q.begin(), q.end(), row.begin());
      out[i] = proximity(row, k, queries.sample_id[i]);
    }
  });
  return out;
}

}  // namespace procal
