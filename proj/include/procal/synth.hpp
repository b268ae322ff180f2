#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "procal/dataset_io.hpp"

namespace procal {

// Synthetic populations. All use 10 classes except kBinaryBrier. Sample ids
// are 0..n-1 and reference ids n..2n-1, so no sample is its own neighbor.
//
//   kExample1     Two well-separated uniform squares in 2-D whose point
//                 densities put the 10-NN proximity near 0.2 and 0.8. Each
//                 sample lands in either square with probability 1/2; it is
//                 correct with probability 0.5 in the sparse square and 0.9
//                 in the dense one. Confidence is 0.7 everywhere.
//   kBiased       Isotropic Gaussian 2-D embeddings with standard deviation
//                 sqrt(n) / 6.05, so proximity is about 0.6 at the mode and
//                 spreads over (0, 1); confidence c ~ U(0.4, 0.95),
//                 correct with probability clamp(c + 0.3 (q - 0.5), 0.01, 0.99)
//                 where q in [0, 1] is the sample's proximity rank quantile.
//   kUnbiased     As kBiased but correct with probability c.
//   kBinaryBrier  Two classes with logits (0, s), s ~ N(0, 4), so confidence
//                 is sigmoid(|s|); correct with probability
//                 clamp(conf - 0.03 - 0.2 (1 - q), 0.01, 0.99).
//
// Confidence c is realised through logits: the predicted class gets
// log(c (C - 1) / (1 - c)) and every other class 0.
enum class SynthKind { kExample1, kBiased, kUnbiased, kBinaryBrier };

std::string_view to_string(SynthKind kind);
SynthKind parse_synth_kind(std::string_view name);

inline constexpr std::size_t kMinSynthSamples = 1000;

struct SynthData {
  PredictionSet preds;
  EmbeddingMatrix embs;
  EmbeddingMatrix reference;
};

SynthData synth_generate(SynthKind kind, std::size_t n, std::uint64_t seed);

struct SynthPaths {
  std::filesystem::path preds;
  std::filesystem::path embs;
  std::filesystem::path reference;
};

// <prefix>.preds.csv, <prefix>.embs.bin, <prefix>.ref.bin
SynthPaths synth_paths(const std::filesystem::path& prefix);
SynthPaths write_synth(const SynthData& data, const std::filesystem::path& prefix);

}  // namespace procal
