#include <cmath>

#include "doctest.h"
#include "maeday/eval.hpp"
#include "maeday/scoring.hpp"

using namespace maeday;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  c.embed_dim = 32;
  c.depth = 1;
  c.decoder_embed_dim = 32;
  c.decoder_depth = 1;
  return c;
}

Image random_image(std::size_t size, Rng& rng) {
  Image img({size, size, 3});
  for (auto& v : img.values()) v = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

TEST_CASE("gaussian kernel") {
  auto one = gaussian_kernel(1, 1.4);
  CHECK(one.weights == std::vector<double>{1.0});

  for (auto [size, sigma] : {std::pair{3, 0.5}, {7, 1.4}, {9, 3.0}}) {
    auto k = gaussian_kernel(size, sigma);
    double total = 0;
    for (double w : k.weights) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t y = 0; y < k.size; ++y)
      for (std::size_t x = 0; x < k.size; ++x) {
        CHECK(k.at(y, x) == k.at(x, y));
        CHECK(k.at(y, x) == k.at(k.size - 1 - y, x));
        CHECK(k.at(y, x) == k.at(y, k.size - 1 - x));
      }
  }

  auto k3 = gaussian_kernel(3, 1.4);
  double z = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) z += std::exp(-(dx * dx + dy * dy) / (2 * 1.4 * 1.4));
  CHECK(k3.at(1, 1) == doctest::Approx(1.0 / z).epsilon(1e-15));
  CHECK(k3.at(0, 0) == doctest::Approx(std::exp(-2 / (2 * 1.4 * 1.4)) / z).epsilon(1e-15));

  CHECK_THROWS(gaussian_kernel(4, 1.4));
  CHECK_THROWS(gaussian_kernel(3, 0.0));
}

TEST_CASE("error map") {
  const auto k = gaussian_kernel();
  Rng rng(1);
  auto q = random_image(16, rng);
  auto zero = error_map(q, q, k);
  for (float v : zero.values()) CHECK(v == 0.0f);

  Image a({16, 16, 3}, 0.2f), b({16, 16, 3}, 0.7f);
  auto flat = error_map(a, b, k);
  for (float v : flat.values()) CHECK(v == doctest::Approx(3 * 0.25f).epsilon(1e-6));

  Image base({20, 20, 3}, 0.5f);
  Image delta = base;
  for (std::size_t ch = 0; ch < 3; ++ch) delta.at(10, 9, ch) = 0.9f;
  auto e = error_map(base, delta, k);
  const double d2 = (0.9 - 0.5) * (0.9 - 0.5);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      const int dy = static_cast<int>(y) - 10, dx = static_cast<int>(x) - 9;
      const double expect = (std::abs(dy) <= 3 && std::abs(dx) <= 3) ? 3 * d2 * k.at(dy + 3, dx + 3) : 0.0;
      CHECK(e.at(y, x) == doctest::Approx(expect).epsilon(1e-5).scale(1e-6));
    }

  CHECK_THROWS(error_map(a, Image({16, 8, 3}), k));
}

TEST_CASE("anomaly result invariant") {
  Map m({2, 2}, {0.1f, 0.7f, 0.3f, 0.0f});
  auto r = AnomalyResult::from_map(m, 1);
  CHECK(r.image_score == 0.7f);
  CHECK_THROWS(AnomalyResult::from_map(Map({1, 2}, {-1.0f, 0.0f}), 1));
}

TEST_CASE("score replays its masks") {
  MaeModel<float> model(small(), 2);
  Rng data(3);
  auto q = random_image(32, data);
  ScoreOptions opt;
  opt.n_repetitions = 2;
  Rng rng(4), replay(4);
  auto r2 = score(model, q, opt, rng);
  CHECK(r2.n_repetitions == 2);
  auto masks = MaskSet::sample(16, 0.75, 2, replay);
  std::vector<Map> singles;
  for (const auto& m : masks.masks) singles.push_back(error_map(q, model.reconstruct(q, m), opt.kernel));
  for (std::size_t i = 0; i < r2.pixel_map.size(); ++i)
    CHECK(r2.pixel_map[i] == (singles[0][i] + singles[1][i]) / 2.0f);
  float best = 0;
  for (float v : r2.pixel_map.values()) best = std::max(best, v);
  CHECK(r2.image_score == best);

  MaskSet first{{masks.masks[0]}};
  CHECK(score_with_masks(model, q, first, opt.kernel).pixel_map == singles[0]);

  // Worker count does not change the result.
  Rng again(4);
  opt.jobs = 3;
  CHECK(score(model, q, opt, again).pixel_map == r2.pixel_map);

  opt.n_repetitions = 0;
  CHECK_THROWS(score(model, q, opt, rng));
}

TEST_CASE("ensemble_sum") {
  auto result = [](std::vector<float> v) { return AnomalyResult::from_map(Map({2, 2}, std::move(v)), 1); };
  std::vector<AnomalyResult> a{result({0.1f, 0.5f, 0.2f, 0.9f}), result({0.3f, 0.3f, 0.4f, 0.0f})};
  std::vector<AnomalyResult> zero{result({0, 0, 0, 0}), result({0, 0, 0, 0})};
  std::vector<AnomalyResult> b{result({1.0f, 0.0f, 0.5f, 0.25f}), result({0.0f, 2.0f, 1.0f, 0.5f})};

  auto same = ensemble_sum({a, zero});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same[i].pixel_map == a[i].pixel_map);

  auto ab = ensemble_sum({a, b}), ba = ensemble_sum({b, a});
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(ab[i].pixel_map == ba[i].pixel_map);
    CHECK(ab[i].image_score == double(a[i].image_score) + double(b[i].image_score));
  }

  auto twice = ensemble_sum({a, a});
  std::vector<double> s1, s2;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < 4; ++p) {
      CHECK(twice[i].pixel_map[p] == 2 * a[i].pixel_map[p]);
      s1.push_back(a[i].pixel_map[p]);
      s2.push_back(twice[i].pixel_map[p]);
    }
  std::vector<int> pl{0, 1, 0, 1, 1, 0, 0, 1};
  CHECK(roc_auc(s1, pl) == roc_auc(s2, pl));

  auto norm = ensemble_sum({a, b}, true);
  for (const auto& r : norm)
    for (float v : r.pixel_map.values()) CHECK((v >= 0.0f && v <= 2.0f));

  std::vector<AnomalyResult> odd{AnomalyResult::from_map(Map({1, 4}), 1), result({0, 0, 0, 0})};
  CHECK_THROWS(ensemble_sum({a, odd}));
  CHECK_THROWS(ensemble_sum({a, {result({0, 0, 0, 0})}}));
}
