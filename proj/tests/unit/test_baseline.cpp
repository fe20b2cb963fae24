#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "maeday/baseline.hpp"
#include "maeday/data.hpp"

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

}  // namespace

TEST_CASE("extract_features") {
  MaeModel<float> model(small(), 1);
  auto img = render_texture(TextureFamily::blob_noise, 32, 1, 0);
  auto f = extract_features(model, img);
  CHECK(f.shape() == Shape{16, 32});
  CHECK(extract_features(model, img) == f);

  auto poked = img;
  for (std::size_t y = 8; y < 16; ++y)
    for (std::size_t x = 16; x < 24; ++x) poked.at(y, x, 0) = 1.0f - poked.at(y, x, 0);
  auto g = extract_features(model, poked);
  bool differs = false;
  for (std::size_t j = 0; j < 32; ++j) differs |= g.at(1 * 4 + 2, j) != f.at(1 * 4 + 2, j);
  CHECK(differs);

  CHECK_THROWS(extract_features(model, render_texture(TextureFamily::stripes, 64, 1, 0)));
}

TEST_CASE("greedy coreset on collinear points") {
  Tensor<float> pts({4, 1}, {0, 1, 2, 9});
  auto pick = greedy_coreset(pts, 2, 0);
  CHECK(pick == std::vector<std::size_t>{0, 3});
  auto three = greedy_coreset(pts, 3, 0);
  // After {0, 9}, point 2 is 2 from its nearest selected; point 1 is 1.
  CHECK(three[2] == 2);
  CHECK_THROWS(greedy_coreset(pts, 5, 0));
  CHECK_THROWS(greedy_coreset(pts, 2, 4));
}

TEST_CASE("build_bank sizes") {
  MaeModel<float> model(small(), 2);
  std::vector<Image> shots{render_texture(TextureFamily::checker, 32, 1, 0)};
  Rng rng(3);
  CHECK(build_bank(model, shots, 1.0, rng).size() == 16);
  auto half = build_bank(model, shots, 0.5, rng);
  CHECK(half.size() == 8);
  CHECK(half.dim() == 32);
  CHECK(build_bank(model, shots, 0.3, rng).size() == 5);  // ceil(4.8)

  ModelConfig c;
  MaeModel<float> desk(c, 4);
  std::vector<Image> one{render_texture(TextureFamily::checker, 64, 1, 0)};
  CHECK(build_bank(desk, one, 0.5, rng).size() == 32);

  CHECK_THROWS(build_bank(model, std::span<const Image>{}, 1.0, rng));
  CHECK_THROWS(build_bank(model, shots, 0.0, rng));
  CHECK_THROWS(build_bank(model, shots, 1.5, rng));
}

TEST_CASE("nearest distances") {
  MemoryBank bank{Tensor<float>({1, 2}, {0, 0}), {{0, 0, 0}}, 1};
  auto d = nearest_distances(bank, Tensor<float>({1, 2}, {3, 4}));
  CHECK(d[0] == 5.0f);

  Rng rng(5);
  Tensor<float> feats({20, 6}), queries({15, 6});
  for (auto& v : feats.values()) v = static_cast<float>(rng.normal());
  for (auto& v : queries.values()) v = static_cast<float>(rng.normal());
  MemoryBank big{feats, std::vector<FeatureSource>(20), 1};
  auto got = nearest_distances(big, queries);
  for (std::size_t q = 0; q < 15; ++q) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < 20; ++m) {
      double acc = 0;
      for (std::size_t k = 0; k < 6; ++k) acc += std::pow(queries.at(q, k) - feats.at(m, k), 2);
      best = std::min(best, std::sqrt(acc));
    }
    CHECK(got[q] == doctest::Approx(best).epsilon(1e-6));
  }

  // Duplicates change nothing; a superset never increases a distance.
  Tensor<float> doubled({40, 6});
  std::copy(feats.values().begin(), feats.values().end(), doubled.data());
  std::copy(feats.values().begin(), feats.values().end(), doubled.data() + 120);
  MemoryBank dup{doubled, std::vector<FeatureSource>(40), 1};
  CHECK(nearest_distances(dup, queries) == got);
  MemoryBank part{Tensor<float>({5, 6}, std::vector<float>(feats.data(), feats.data() + 30)),
                  std::vector<FeatureSource>(5), 1};
  auto sub = nearest_distances(part, queries);
  for (std::size_t q = 0; q < 15; ++q) CHECK(got[q] <= sub[q]);

  CHECK_THROWS(nearest_distances(bank, queries));
}

TEST_CASE("bank_score") {
  MaeModel<float> model(small(), 6);
  auto shot = render_texture(TextureFamily::wood_grain, 32, 1, 0);
  Rng rng(7);
  auto bank = build_bank(model, std::vector<Image>{shot}, 1.0, rng);
  auto self = bank_score(bank, model, shot);
  CHECK(self.pixel_map.shape() == Shape{32, 32});
  CHECK(self.image_score == 0.0f);

  auto other = bank_score(bank, model, render_texture(TextureFamily::stripes, 32, 1, 0));
  CHECK(other.image_score > 0.0f);

  MaeModel<float> wide([] {
    ModelConfig c;
    c.image_size = 32;
    return c;
  }(), 8);
  CHECK_THROWS(bank_score(bank, wide, shot));

  const auto path = std::filesystem::temp_directory_path() / "maeday_test_bank.ckpt";
  bank.save(path);
  auto back = MemoryBank::load(path);
  CHECK(back.features == bank.features);
  CHECK(back.size() == bank.size());
  CHECK(back.sources[5].col == bank.sources[5].col);
  std::filesystem::remove(path);
}
