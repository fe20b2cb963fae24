#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "maeday/model.hpp"
#include "maeday/scoring.hpp"

namespace maeday {

// Nearest-patch-feature baseline: normal patch embeddings from the MAE
// encoder are stored in a memory bank, and a query token scores its
// Euclidean distance to the closest stored feature. This is not PatchCore;
// it has no CNN mid-level features and no reweighting.

struct FeatureSource {
  std::size_t shot = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

struct MemoryBank {
  Tensor<float> features;  // M x d
  std::vector<FeatureSource> sources;
  std::size_t grid = 0;  // token grid side of the extracting model

  std::size_t size() const { return sources.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features.dim(1); }

  void save(const std::filesystem::path& path) const;
  static MemoryBank load(const std::filesystem::path& path);
};

// Encoder output over all tokens (nothing masked), after the encoder's
// final layer norm. T x embed_dim.
Tensor<float> extract_features(const MaeModel<float>& model, const Image& image);

// Greedy farthest-point selection: starts at `start`, then repeatedly takes
// the row with the largest distance to its nearest selected row. Ties go to
// the lowest index.
std::vector<std::size_t> greedy_coreset(const Tensor<float>& features, std::size_t count, std::size_t start);

// Bank of ceil(fraction * K * T) features; fraction 1 keeps every feature,
// otherwise a greedy coreset from a start drawn from rng.
MemoryBank build_bank(const MaeModel<float>& model, std::span<const Image> shots, double coreset_fraction, Rng& rng);

// Min Euclidean distance of each row of `queries` to the bank rows.
std::vector<float> nearest_distances(const MemoryBank& bank, const Tensor<float>& queries);

// Token distances upsampled bilinearly to the image, image score = max.
AnomalyResult bank_score(const MemoryBank& bank, const MaeModel<float>& model, const Image& query);

}  // namespace maeday
