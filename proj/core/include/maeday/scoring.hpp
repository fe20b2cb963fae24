#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maeday/model.hpp"
#include "maeday/rng.hpp"
#include "maeday/tensor.hpp"

namespace maeday {

struct GaussianKernel {
  std::size_t size = 7;
  double sigma = 1.4;
  std::vector<double> weights;  // size x size, row-major, sums to 1

  double at(std::size_t y, std::size_t x) const { return weights[y * size + x]; }
};

// Sampled exp(-(dx^2 + dy^2) / (2 sigma^2)) normalized to unit sum.
GaussianKernel gaussian_kernel(std::size_t size = 7, double sigma = 1.4);

// Convolves an H x W field with the kernel. Borders mirror the field with
// the edge pixel repeated (d c b a | a b c d), so constants stay constant.
Map gaussian_filter(const Map& field, const GaussianKernel& kernel);

// Per-channel squared error, filtered channel by channel, summed over channels.
Map error_map(const Image& query, const Image& recon, const GaussianKernel& kernel);

struct AnomalyResult {
  Map pixel_map;             // E, H x W, non-negative
  float image_score = 0.0f;  // S = max(E)
  std::size_t n_repetitions = 0;

  static AnomalyResult from_map(Map map, std::size_t n_repetitions);
};

struct ScoreOptions {
  std::size_t n_repetitions = 32;
  double mask_ratio = 0.75;
  GaussianKernel kernel = gaussian_kernel(7, 1.4);
  // Worker threads for the per-mask reconstructions; 0 or 1 runs inline.
  std::size_t jobs = 1;
};

// One error map per mask, in mask order.
std::vector<Map> per_mask_error_maps(const MaeModel<float>& model, const Image& query, const MaskSet& masks,
                                     const GaussianKernel& kernel, std::size_t jobs = 1);

// Mean of the maps, summed in the given order then divided by the count.
Map mean_map(std::span<const Map> maps);

// Draws n_repetitions masks from rng, then averages their error maps into E.
AnomalyResult score(const MaeModel<float>& model, const Image& query, const ScoreOptions& options, Rng& rng);
AnomalyResult score_with_masks(const MaeModel<float>& model, const Image& query, const MaskSet& masks,
                               const GaussianKernel& kernel, std::size_t jobs = 1);

// Combined output of several scorers over the same images. image_score is
// the sum of member scores, which in general is not the max of the summed map.
struct EnsembleResult {
  Map pixel_map;
  double image_score = 0.0;
};

// members[m][i] is member m's result on image i. With normalize set, each
// member's maps and scores are first min-max scaled to [0, 1] using that
// member's range over all images.
std::vector<EnsembleResult> ensemble_sum(const std::vector<std::vector<AnomalyResult>>& members, bool normalize = false);

}  // namespace maeday
