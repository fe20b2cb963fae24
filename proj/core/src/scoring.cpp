#include "maeday/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>

namespace maeday {

namespace {

// Symmetric mirror of an out-of-range index into [0, n).
std::ptrdiff_t mirror(std::ptrdiff_t i, std::ptrdiff_t n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

std::vector<double> kernel_1d(std::size_t size, double sigma) {
  const auto half = static_cast<std::ptrdiff_t>(size / 2);
  std::vector<double> g(size);
  double total = 0.0;
  for (std::ptrdiff_t k = -half; k <= half; ++k)
    total += (g[static_cast<std::size_t>(k + half)] = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma)));
  for (auto& v : g) v /= total;
  return g;
}

// Separable filter of one channel of an interleaved H x W x C buffer (as doubles).
void filter_channel(const std::vector<double>& field, std::size_t h, std::size_t w, const std::vector<double>& g,
                    std::vector<double>& out) {
  const auto half = static_cast<std::ptrdiff_t>(g.size() / 2);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  std::vector<double> rows(h * w);
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k)
        acc += g[static_cast<std::size_t>(k + half)] * field[static_cast<std::size_t>(y * W + mirror(x + k, W))];
      rows[static_cast<std::size_t>(y * W + x)] = acc;
    }
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k)
        acc += g[static_cast<std::size_t>(k + half)] * rows[static_cast<std::size_t>(mirror(y + k, H) * W + x)];
      out[static_cast<std::size_t>(y * W + x)] = acc;
    }
}

void check_kernel(const GaussianKernel& kernel) {
  if (kernel.size % 2 == 0 || kernel.weights.size() != kernel.size * kernel.size || !(kernel.sigma > 0.0))
    throw std::invalid_argument("malformed Gaussian kernel");
}

}  // namespace

GaussianKernel gaussian_kernel(std::size_t size, double sigma) {
  if (size == 0 || size % 2 == 0) throw std::invalid_argument("Gaussian kernel size must be odd, got " + std::to_string(size));
  if (!(sigma > 0.0)) throw std::invalid_argument("Gaussian kernel sigma must be positive");
  GaussianKernel k{size, sigma, std::vector<double>(size * size)};
  const auto half = static_cast<std::ptrdiff_t>(size / 2);
  double total = 0.0;
  for (std::ptrdiff_t dy = -half; dy <= half; ++dy)
    for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
      const double v = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k.weights[static_cast<std::size_t>((dy + half) * static_cast<std::ptrdiff_t>(size) + dx + half)] = v;
      total += v;
    }
  for (auto& v : k.weights) v /= total;
  return k;
}

Map gaussian_filter(const Map& field, const GaussianKernel& kernel) {
  check_kernel(kernel);
  if (field.rank() != 2) throw std::invalid_argument("gaussian_filter: expected an H x W field");
  const std::size_t h = field.dim(0), w = field.dim(1);
  std::vector<double> in(field.values().begin(), field.values().end()), out(h * w);
  filter_channel(in, h, w, kernel_1d(kernel.size, kernel.sigma), out);
  Map result({h, w});
  for (std::size_t i = 0; i < out.size(); ++i) result[i] = static_cast<float>(out[i]);
  return result;
}

Map error_map(const Image& query, const Image& recon, const GaussianKernel& kernel) {
  check_kernel(kernel);
  if (query.rank() != 3 || query.shape() != recon.shape())
    throw std::invalid_argument("error_map: shape mismatch " + shape_to_string(query.shape()) + " vs " +
                                shape_to_string(recon.shape()));
  const std::size_t h = query.dim(0), w = query.dim(1), channels = query.dim(2);
  const auto g = kernel_1d(kernel.size, kernel.sigma);
  std::vector<double> squared(h * w), filtered(h * w), total(h * w, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) {
      const double d = static_cast<double>(query[i * channels + c]) - static_cast<double>(recon[i * channels + c]);
      squared[i] = d * d;
    }
    filter_channel(squared, h, w, g, filtered);
    for (std::size_t i = 0; i < h * w; ++i) total[i] += filtered[i];
  }
  Map out({h, w});
  for (std::size_t i = 0; i < total.size(); ++i) out[i] = static_cast<float>(std::max(total[i], 0.0));
  return out;
}

AnomalyResult AnomalyResult::from_map(Map map, std::size_t n_repetitions) {
  if (map.empty()) throw std::invalid_argument("anomaly map is empty");
  float peak = -std::numeric_limits<float>::infinity();
  for (float v : map.values()) {
    if (v < 0.0f || !std::isfinite(v)) throw std::domain_error("anomaly map entries must be finite and non-negative");
    peak = std::max(peak, v);
  }
  return AnomalyResult{std::move(map), peak, n_repetitions};
}

std::vector<Map> per_mask_error_maps(const MaeModel<float>& model, const Image& query, const MaskSet& masks,
                                     const GaussianKernel& kernel, std::size_t jobs) {
  std::vector<Map> maps(masks.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < masks.size(); i += stride)
      maps[i] = error_map(query, model.reconstruct(query, masks.masks[i]), kernel);
  };
  jobs = std::min(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(masks.size(), 1));
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t j = 0; j < jobs; ++j) workers.emplace_back(work, j, jobs);
  }
  return maps;
}

Map mean_map(std::span<const Map> maps) {
  if (maps.empty()) throw std::invalid_argument("mean_map: no maps");
  std::vector<double> acc(maps.front().size(), 0.0);
  for (const auto& m : maps) {
    if (m.shape() != maps.front().shape()) throw std::invalid_argument("mean_map: maps differ in shape");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m[i];
  }
  Map out(maps.front().shape());
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
  return out;
}

AnomalyResult score_with_masks(const MaeModel<float>& model, const Image& query, const MaskSet& masks,
                               const GaussianKernel& kernel, std::size_t jobs) {
  if (masks.size() == 0) throw std::invalid_argument("score: at least one mask is required");
  const auto maps = per_mask_error_maps(model, query, masks, kernel, jobs);
  return AnomalyResult::from_map(mean_map(maps), masks.size());
}

AnomalyResult score(const MaeModel<float>& model, const Image& query, const ScoreOptions& options, Rng& rng) {
  if (options.n_repetitions == 0) throw std::invalid_argument("score: N must be at least 1");
  const auto masks =
      MaskSet::sample(model.config().token_count(), options.mask_ratio, options.n_repetitions, rng);
  return score_with_masks(model, query, masks, options.kernel, options.jobs);
}

std::vector<EnsembleResult> ensemble_sum(const std::vector<std::vector<AnomalyResult>>& members, bool normalize) {
  if (members.empty()) throw std::invalid_argument("ensemble_sum: no members");
  const std::size_t n_images = members.front().size();
  for (const auto& m : members)
    if (m.size() != n_images) throw std::invalid_argument("ensemble_sum: members scored different image counts");

  std::vector<EnsembleResult> out(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    out[i].pixel_map = Map(members.front()[i].pixel_map.shape());
    out[i].image_score = 0.0;
  }
  for (const auto& member : members) {
    double map_lo = 0.0, map_scale = 1.0, score_lo = 0.0, score_scale = 1.0;
    if (normalize) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      double slo = lo, shi = -lo;
      for (const auto& r : member) {
        for (float v : r.pixel_map.values()) {
          lo = std::min(lo, static_cast<double>(v));
          hi = std::max(hi, static_cast<double>(v));
        }
        slo = std::min(slo, static_cast<double>(r.image_score));
        shi = std::max(shi, static_cast<double>(r.image_score));
      }
      map_lo = lo;
      map_scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
      score_lo = slo;
      score_scale = shi > slo ? 1.0 / (shi - slo) : 0.0;
    }
    for (std::size_t i = 0; i < n_images; ++i) {
      const auto& r = member[i];
      if (r.pixel_map.shape() != out[i].pixel_map.shape())
        throw std::invalid_argument("ensemble_sum: map shapes differ for image " + std::to_string(i));
      for (std::size_t p = 0; p < r.pixel_map.size(); ++p)
        out[i].pixel_map[p] += static_cast<float>((r.pixel_map[p] - map_lo) * map_scale);
      out[i].image_score += (r.image_score - score_lo) * score_scale;
    }
  }
  return out;
}

}  // namespace maeday
