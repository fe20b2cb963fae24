#include "maeday/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "maeday/checkpoint.hpp"
#include "maeday/data.hpp"

namespace maeday {

namespace {

double squared_distance(const float* a, const float* b, std::size_t d) {
  double total = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    total += diff * diff;
  }
  return total;
}

}  // namespace

Tensor<float> extract_features(const MaeModel<float>& model, const Image& image) {
  const auto& c = model.config();
  if (image.shape() != Shape{c.image_size, c.image_size, c.channels})
    throw std::invalid_argument("extract_features: image shape " + shape_to_string(image.shape()) +
                                " does not match model config");
  NoGradGuard no_grad;
  std::vector<std::size_t> all(c.token_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return model.encode(patchify(image, c.patch_size), all).value();
}

std::vector<std::size_t> greedy_coreset(const Tensor<float>& features, std::size_t count, std::size_t start) {
  const std::size_t n = features.rows(), d = features.cols();
  if (count == 0 || count > n) throw std::invalid_argument("greedy_coreset: count must be in [1, rows]");
  if (start >= n) throw std::invalid_argument("greedy_coreset: start index out of range");
  std::vector<std::size_t> selected{start};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t last = start;
  while (selected.size() < count) {
    std::size_t best = 0;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(features.data() + i * d, features.data() + last * d, d));
      if (nearest[i] > best_dist) {
        best_dist = nearest[i];
        best = i;
      }
    }
    selected.push_back(best);
    last = best;
  }
  return selected;
}

MemoryBank build_bank(const MaeModel<float>& model, std::span<const Image> shots, double coreset_fraction, Rng& rng) {
  if (shots.empty()) throw std::invalid_argument("build_bank: no shots");
  if (!(coreset_fraction > 0.0 && coreset_fraction <= 1.0))
    throw std::invalid_argument("build_bank: coreset fraction must lie in (0, 1]");
  const std::size_t grid = model.config().grid(), tokens = model.config().token_count();
  const std::size_t d = model.config().embed_dim;
  Tensor<float> all({shots.size() * tokens, d});
  std::vector<FeatureSource> sources;
  for (std::size_t s = 0; s < shots.size(); ++s) {
    const auto f = extract_features(model, shots[s]);
    std::copy(f.values().begin(), f.values().end(), all.data() + s * tokens * d);
    for (std::size_t t = 0; t < tokens; ++t) sources.push_back({s, t / grid, t % grid});
  }
  const std::size_t total = all.rows();
  const auto keep = static_cast<std::size_t>(std::ceil(coreset_fraction * static_cast<double>(total) - 1e-9));
  if (keep >= total) return MemoryBank{std::move(all), std::move(sources), grid};

  const auto chosen = greedy_coreset(all, std::max<std::size_t>(keep, 1), rng.below(total));
  MemoryBank bank{Tensor<float>({chosen.size(), d}), {}, grid};
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    std::copy_n(all.data() + chosen[k] * d, d, bank.features.data() + k * d);
    bank.sources.push_back(sources[chosen[k]]);
  }
  return bank;
}

std::vector<float> nearest_distances(const MemoryBank& bank, const Tensor<float>& queries) {
  if (bank.size() == 0) throw std::invalid_argument("memory bank is empty");
  const std::size_t d = bank.dim();
  if (queries.cols() != d)
    throw std::invalid_argument("feature dimension " + std::to_string(queries.cols()) + " does not match bank dimension " +
                                std::to_string(d));
  std::vector<float> out(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < bank.size(); ++m)
      best = std::min(best, squared_distance(queries.data() + q * d, bank.features.data() + m * d, d));
    out[q] = static_cast<float>(std::sqrt(best));
  }
  return out;
}

AnomalyResult bank_score(const MemoryBank& bank, const MaeModel<float>& model, const Image& query) {
  const auto& c = model.config();
  if (bank.grid != c.grid() || bank.dim() != c.embed_dim)
    throw std::invalid_argument("bank_score: bank was built with a different model configuration");
  const auto distances = nearest_distances(bank, extract_features(model, query));
  Map tokens({c.grid(), c.grid()}, distances);
  return AnomalyResult::from_map(resize(tokens, c.image_size, c.image_size), 1);
}

void MemoryBank::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.set("kind", "memory_bank");
  ck.set("grid", std::to_string(grid));
  ck.set("size", std::to_string(size()));
  Tensor<float> src({std::max<std::size_t>(size(), 1), 3});
  for (std::size_t i = 0; i < size(); ++i) {
    src.at(i, 0) = static_cast<float>(sources[i].shot);
    src.at(i, 1) = static_cast<float>(sources[i].row);
    src.at(i, 2) = static_cast<float>(sources[i].col);
  }
  ck.add_tensor("features", features);
  ck.add_tensor("sources", std::move(src));
  ck.save(path);
}

MemoryBank MemoryBank::load(const std::filesystem::path& path) {
  const auto ck = Checkpoint::load(path);
  if (ck.get("kind").value_or("") != "memory_bank") throw std::runtime_error(path.string() + " does not hold a memory bank");
  MemoryBank bank;
  bank.grid = std::stoul(ck.require("grid"));
  bank.features = ck.tensor("features");
  const auto& src = ck.tensor("sources");
  const std::size_t n = std::stoul(ck.require("size"));
  if (n != bank.features.rows()) throw std::runtime_error(path.string() + ": bank size does not match features");
  for (std::size_t i = 0; i < n; ++i)
    bank.sources.push_back({static_cast<std::size_t>(src.at(i, 0)), static_cast<std::size_t>(src.at(i, 1)),
                            static_cast<std::size_t>(src.at(i, 2))});
  return bank;
}

}  // namespace maeday
