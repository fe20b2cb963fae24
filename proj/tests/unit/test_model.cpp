#include <algorithm>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "maeday/data.hpp"
#include "maeday/gradcheck.hpp"
#include "maeday/model.hpp"

using namespace maeday;

namespace {

ModelConfig toy() {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = 8;
  c.embed_dim = 32;
  c.depth = 1;
  c.num_heads = 4;
  c.decoder_embed_dim = 32;
  c.decoder_depth = 1;
  c.decoder_num_heads = 4;
  return c;
}

template <typename T>
Tensor<T> random_image(std::size_t size, Rng& rng) {
  Tensor<T> img({size, size, 3});
  for (auto& v : img.values()) v = static_cast<T>(rng.uniform());
  return img;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.patch_size = 7;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.image_size = 224;
  c.patch_size = 16;
  CHECK(c.token_count() == 196);
  CHECK(c.patch_dim() == 768);
}

TEST_CASE("patchify") {
  Tensor<float> img({2, 2, 3});
  std::iota(img.values().begin(), img.values().end(), 0.0f);
  auto tokens = patchify(img, 1);
  CHECK(tokens.shape() == Shape{4, 3});
  CHECK(tokens.storage() == img.storage());

  Rng rng(1);
  auto one = patchify(random_image<float>(8, rng), 8);
  CHECK(one.shape() == Shape{1, 192});

  auto big = random_image<float>(224, rng);
  auto t = patchify(big, 16);
  CHECK(t.shape() == Shape{196, 768});
  CHECK(unpatchify(t, 16, 224, 3) == big);
  // Second patch of the first row starts at pixel (0, 16).
  CHECK(t.at(1, 0) == big.at(0, 16, 0));
  CHECK(t.at(14, 3 * 16) == big.at(17, 0, 0));

  CHECK_THROWS(patchify(random_image<float>(10, rng), 4));
}

TEST_CASE("masks") {
  Rng rng(2);
  CHECK(visible_count(196, 0.75) == 49);
  CHECK(visible_count(64, 0.75) == 16);
  CHECK(visible_count(49, 0.75) == 12);  // 12.25 rounds to 12
  CHECK(visible_count(2, 0.75) == 1);    // 0.5 rounds up
  CHECK_THROWS(visible_count(4, 0.99));
  CHECK_THROWS(visible_count(4, 0.01));
  CHECK_THROWS(sample_mask(4, 0.0, rng));
  auto m = sample_mask(196, 0.75, rng);
  CHECK(std::count(m.begin(), m.end(), true) == 49);
  Rng a(9), b(9);
  CHECK(sample_mask(64, 0.75, a) == sample_mask(64, 0.75, b));
  auto set = MaskSet::sample(64, 0.75, 32, rng);
  CHECK(set.size() == 32);
  for (const auto& v : set.masks) CHECK(visible_indices(v).size() == 16);
  CHECK(masked_indices(set.masks[0]).size() == 48);
}

TEST_CASE("reconstruct contract") {
  const auto c = toy();
  MaeModel<float> model(c, 3);
  Rng rng(4);
  auto img = random_image<float>(16, rng);
  auto mask = sample_mask(c.token_count(), 0.75, rng);
  auto r1 = model.reconstruct(img, mask);
  auto r2 = model.reconstruct(img, mask);
  CHECK(r1.shape() == img.shape());
  CHECK(r1 == r2);
  MaeModel<float> again(c, 3);
  CHECK(again.reconstruct(img, mask) == r1);
  CHECK_THROWS(model.reconstruct(random_image<float>(8, rng), mask));
  CHECK_THROWS(model.reconstruct(img, Visibility(5, true)));
}

TEST_CASE("encoder sequence length equals the visible count") {
  ModelConfig c;
  MaeModel<float> model(c, 5);
  Rng rng(6);
  auto tokens = patchify(random_image<float>(64, rng), 8);
  auto vis = visible_indices(sample_mask(64, 0.75, rng));
  NoGradGuard guard;
  CHECK(model.encode(tokens, vis).shape() == Shape{16, 64});
  CHECK(model.forward(tokens, vis).shape() == Shape{64, 192});
}

TEST_CASE("visible-token order does not change the reconstruction") {
  ModelConfig c;
  MaeModel<float> model(c, 7);
  Rng rng(8);
  auto tokens = patchify(random_image<float>(64, rng), 8);
  auto vis = visible_indices(sample_mask(64, 0.75, rng));
  NoGradGuard guard;
  const auto base = model.forward(tokens, vis).value();
  for (int trial = 0; trial < 5; ++trial) {
    auto perm = vis;
    const auto order = rng.sample_without_replacement(perm.size(), perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = vis[order[i]];
    const auto out = model.forward(tokens, perm).value();
    float worst = 0.0f;
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] - base[i]));
    CHECK(worst <= 1e-5f);
  }
}

TEST_CASE("sincos table") {
  auto t = sincos_position_table(8, 2);
  CHECK(t.shape() == Shape{4, 8});
  // Cell 0 has sin(0) = 0 and cos(0) = 1 halves.
  CHECK(t.at(0, 0) == 0.0);
  CHECK(t.at(0, 2) == 1.0);
  CHECK_THROWS(sincos_position_table(6, 2));
}

TEST_CASE("loss support") {
  const auto c = toy();
  MaeModel<float> model(c, 10);
  Rng rng(11);
  auto tokens = patchify(random_image<float>(16, rng), 8);
  Visibility mask{true, false, false, false};
  const float base = reconstruction_loss(model, tokens, mask, LossSupport::masked_only).value()[0];
  auto visible_changed = tokens;
  for (std::size_t j = 0; j < tokens.cols(); ++j) visible_changed.at(0, j) = 5.0f;
  // Visible token 0 is the encoder's input too, so only the targets may differ: compare
  // against a loss whose target changes but whose input does not.
  auto with_target = [&](const Tensor<float>& target) {
    NoGradGuard guard;
    auto pred = model.forward(tokens, visible_indices(mask));
    std::vector<float> w{0, 1, 1, 1};
    return weighted_row_mse(pred, target, std::span<const float>(w)).value()[0];
  };
  CHECK(with_target(tokens) == doctest::Approx(base).epsilon(1e-6));
  CHECK(with_target(visible_changed) == with_target(tokens));
  auto masked_changed = tokens;
  for (std::size_t j = 0; j < tokens.cols(); ++j) masked_changed.at(2, j) = 5.0f;
  CHECK(with_target(masked_changed) != with_target(tokens));
  CHECK(reconstruction_loss(model, tokens, mask, LossSupport::all_patches).value()[0] != base);
}

TEST_CASE("pretrain") {
  const auto c = toy();
  Rng data(12);
  std::vector<Image> corpus;
  for (int i = 0; i < 8; ++i) corpus.push_back(render_texture(TextureFamily::stripes, 16, 1, i));

  SUBCASE("zero steps leaves the model unchanged") {
    MaeModel<float> model(c, 13);
    auto before = model.to_checkpoint();
    PretrainConfig cfg;
    cfg.steps = 0;
    Rng rng(14);
    CHECK(pretrain(model, corpus, cfg, rng).empty());
    auto after = model.to_checkpoint();
    for (std::size_t i = 0; i < before.tensors.size(); ++i) CHECK(before.tensors[i].second == after.tensors[i].second);
  }
  SUBCASE("loss decreases") {
    MaeModel<float> model(c, 15);
    PretrainConfig cfg;
    cfg.steps = 200;
    cfg.batch_size = 8;
    cfg.warmup_steps = 20;
    Rng rng(16);
    auto trace = pretrain(model, corpus, cfg, rng);
    REQUIRE(trace.size() == 200);
    const double first = std::accumulate(trace.begin(), trace.begin() + 20, 0.0) / 20;
    const double last = std::accumulate(trace.end() - 20, trace.end(), 0.0) / 20;
    CHECK(last < first);
  }
  SUBCASE("constant corpus improves constant reconstruction") {
    std::vector<Image> flat;
    for (int i = 0; i < 8; ++i) flat.push_back(Image({16, 16, 3}, 0.1f + 0.1f * static_cast<float>(i)));
    MaeModel<float> model(c, 17);
    Image query({16, 16, 3}, 0.45f);
    Rng mr(18);
    auto mask = sample_mask(c.token_count(), 0.75, mr);
    auto mse = [&](const MaeModel<float>& m) {
      auto r = m.reconstruct(query, mask);
      double acc = 0;
      for (std::size_t i = 0; i < r.size(); ++i) acc += (r[i] - query[i]) * (r[i] - query[i]);
      return acc / static_cast<double>(r.size());
    };
    const double before = mse(model);
    PretrainConfig cfg;
    cfg.steps = 100;
    cfg.batch_size = 8;
    cfg.warmup_steps = 10;
    Rng rng(19);
    pretrain(model, flat, cfg, rng);
    CHECK(mse(model) < before);
  }
  SUBCASE("all-patch loss also fits the visible patches") {
    PretrainConfig cfg;
    cfg.steps = 200;
    cfg.batch_size = 8;
    cfg.warmup_steps = 20;
    MaeModel<float> masked(c, 15), all(c, 15);
    Rng r1(16), r2(16);
    pretrain(masked, corpus, cfg, r1);
    cfg.loss_support = LossSupport::all_patches;
    pretrain(all, corpus, cfg, r2);
    Rng probe(30);
    double visible_masked = 0.0, visible_all = 0.0;
    for (int i = 0; i < 8; ++i) {
      auto tokens = patchify(corpus[static_cast<std::size_t>(i)], 8);
      auto mask = sample_mask(c.token_count(), 0.75, probe);
      // Error on the visible tokens only.
      NoGradGuard guard;
      std::vector<float> w(mask.size());
      for (std::size_t t = 0; t < mask.size(); ++t) w[t] = mask[t] ? 1.0f : 0.0f;
      const auto vis = visible_indices(mask);
      visible_masked += weighted_row_mse(masked.forward(tokens, vis), tokens, std::span<const float>(w)).value()[0];
      visible_all += weighted_row_mse(all.forward(tokens, vis), tokens, std::span<const float>(w)).value()[0];
    }
    CHECK(visible_all < visible_masked);
  }
  SUBCASE("empty corpus rejected") {
    MaeModel<float> model(c, 20);
    Rng rng(21);
    CHECK_THROWS(pretrain(model, std::span<const Image>{}, PretrainConfig{}, rng));
  }
}

TEST_CASE("full model gradient check on a toy config") {
  const auto c = toy();
  MaeModel<double> model(c, 22);
  Rng rng(23);
  auto tokens = patchify(random_image<double>(16, rng), 8);
  Visibility mask{false, true, false, false};
  auto params = model.trainable_parameters();
  auto report = grad_check_parameters(
      [&] { return reconstruction_loss(model, tokens, mask, LossSupport::masked_only); }, params, 1e-4);
  CHECK(report.entries_checked > 0);
  CHECK(report.max_rel_error <= 1e-5);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto path = std::filesystem::temp_directory_path() / "maeday_test_model.ckpt";
  MaeModel<float> model(toy(), 24);
  model.save(path);
  auto back = MaeModel<float>::load(path);
  CHECK(back.config() == model.config());
  Rng rng(25);
  auto img = random_image<float>(16, rng);
  auto mask = sample_mask(4, 0.75, rng);
  CHECK(back.reconstruct(img, mask) == model.reconstruct(img, mask));
  std::filesystem::remove(path);
}
