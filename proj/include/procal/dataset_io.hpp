#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace procal {

// Precomputed classifier outputs, one entry per sample (structure of arrays).
// When logits are present they are stored row-major, n x num_classes, and
// pred_label/confidence are always derived from them.
struct PredictionSet {
  int num_classes = 0;
  std::vector<std::int64_t> sample_id;
  std::vector<int> true_label;
  std::vector<int> pred_label;
  std::vector<double> confidence;
  std::vector<double> logits;

  std::size_t size() const { return sample_id.size(); }
  bool has_logits() const { return !logits.empty(); }
  std::span<const double> logit_row(std::size_t i) const {
    return {logits.data() + i * static_cast<std::size_t>(num_classes),
            static_cast<std::size_t>(num_classes)};
  }
  bool is_correct(std::size_t i) const { return pred_label[i] == true_label[i]; }

  std::vector<std::uint8_t> correctness() const;
  PredictionSet subset(std::span<const std::size_t> rows) const;
};

// Row-major n x dim feature matrix, stored in single precision.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<std::int64_t> sample_id;

  std::size_t rows() const { return sample_id.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }

  EmbeddingMatrix subset(std::span<const std::size_t> rows) const;
};

struct SplitSpec {
  double fraction = 0.5;
  std::uint64_t seed = 2020;
};

struct SoftmaxResult {
  int label = 0;
  double confidence = 0.0;
};

// Max softmax probability with max-subtraction; ties resolve to the lowest index.
SoftmaxResult softmax_confidence(std::span<const double> logits);

// Throws procal::Error on any invariant violation of a PredictionSet.
void validate(const PredictionSet& preds);
void validate(const EmbeddingMatrix& embs);

// Stored confidence may differ from the softmax recomputed from logits by at
// most this much (single-precision upstream pipelines).
inline constexpr double kConfidenceTolerance = 1e-4;

PredictionSet load_prediction_table(const std::filesystem::path& path);
void write_prediction_table(const PredictionSet& preds, const std::filesystem::path& path);

// Detects the binary format by its magic prefix, otherwise parses CSV.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void write_embeddings_binary(const EmbeddingMatrix& embs, const std::filesystem::path& path);
void write_embeddings_csv(const EmbeddingMatrix& embs, const std::filesystem::path& path);

// Reorders embedding rows to follow the prediction rows, matching by id.
EmbeddingMatrix align_embeddings(const PredictionSet& preds, const EmbeddingMatrix& embs);

struct DatasetPart {
  std::vector<std::size_t> rows;  // indices into the input, ascending
  PredictionSet preds;
  std::optional<EmbeddingMatrix> embs;
};

// Seeded shuffle, then prefix cut of floor(fraction * n) rows for the first
// part. Both parts keep input order.
std::pair<DatasetPart, DatasetPart> split_dataset(const PredictionSet& preds,
                                                  const EmbeddingMatrix* embs,
                                                  const SplitSpec& spec);

}  // namespace procal
