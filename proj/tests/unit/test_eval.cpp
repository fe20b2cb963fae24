#include <cmath>

#include "doctest.h"
#include "maeday/eval.hpp"

using namespace maeday;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1 && l[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

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

Dataset tiny_dataset() {
  SyntheticSpec spec;
  spec.family = TextureFamily::checker;
  spec.resolution = 32;
  spec.max_defect_area = 120;
  spec.seed = 3;
  return generate_dataset(spec, 4, 3, 3);
}

}  // namespace

TEST_CASE("roc_auc examples") {
  CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{0, 1, 1}) == 0.5);
  CHECK_THROWS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}));
  CHECK_THROWS(roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}));
  CHECK_THROWS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{2, 0}));
}

TEST_CASE("roc_auc properties on random instances") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n);
    std::vector<int> l(n), flipped(n);
    for (auto& v : s) v = static_cast<double>(rng.below(trial % 2 ? 4 : 1000));
    for (std::size_t i = 0; i < n; ++i) l[i] = static_cast<int>(rng.below(2));
    l[0] = 0;
    l[1] = 1;
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - l[i];
    const double a = roc_auc(s, l);
    CHECK(a == doctest::Approx(pairwise_auc(s, l)).epsilon(1e-12));
    CHECK(a + roc_auc(s, flipped) == 1.0);
    std::vector<double> warped(n);
    for (std::size_t i = 0; i < n; ++i) warped[i] = std::exp(0.01 * s[i]) * 3.0 - 7.0;
    CHECK(roc_auc(warped, l) == a);
  }
}

TEST_CASE("pixel_auc") {
  Map gt({4, 4});
  gt.at(1, 1) = gt.at(1, 2) = 1.0f;
  Map normal({4, 4});
  std::vector<Map> masks{gt, normal};
  CHECK(pixel_auc(std::vector<Map>{gt, normal}, masks) == 1.0);
  Map inv_gt = gt, inv_n = normal;
  for (auto& v : inv_gt.values()) v = 1.0f - v;
  for (auto& v : inv_n.values()) v = 1.0f - v;
  CHECK(pixel_auc(std::vector<Map>{inv_gt, inv_n}, masks) == 0.0);

  Rng rng(2);
  Map a({2, 2}), b({2, 2});
  for (auto& v : a.values()) v = static_cast<float>(rng.uniform());
  for (auto& v : b.values()) v = static_cast<float>(rng.uniform());
  Map ma({2, 2}, {1, 0, 0, 0}), mb({2, 2}, {0, 0, 1, 1});
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 4; ++i) {
    scores.push_back(a[i]);
    labels.push_back(ma[i] > 0.5f);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    scores.push_back(b[i]);
    labels.push_back(mb[i] > 0.5f);
  }
  CHECK(pixel_auc(std::vector<Map>{a, b}, std::vector<Map>{ma, mb}) == roc_auc(scores, labels));

  // Maps are upsampled to the mask resolution.
  Map coarse({2, 2}, {0, 0, 0, 1});
  Map fine({4, 4});
  fine.at(3, 3) = 1.0f;
  CHECK(pixel_auc(std::vector<Map>{coarse}, std::vector<Map>{fine}) == 1.0);

  CHECK_THROWS(pixel_auc(std::vector<Map>{normal}, std::vector<Map>{normal}));
}

TEST_CASE("run_experiment") {
  auto ds = tiny_dataset();
  MaeModel<float> model(small(), 4);
  Protocol p;
  p.n_repetitions = 4;
  p.finetune.iterations = 2;
  p.finetune.batch_size = 2;
  p.finetune.rank = 4;

  SUBCASE("zero shot is identical across seeds") {
    auto r = run_experiment(ds, model, p);
    REQUIRE(r.seeds.size() == 3);
    CHECK(r.seeds[0].image_auc == r.seeds[1].image_auc);
    CHECK(r.seeds[1].pixel_auc == r.seeds[2].pixel_auc);
    CHECK(r.image_auc_std.has_value());
    CHECK(*r.image_auc_std == 0.0);
    CHECK(r.seeds[2].seed == 2);
  }
  SUBCASE("single seed omits std") {
    p.n_seeds = 1;
    p.k_shots = 1;
    auto r = run_experiment(ds, model, p);
    CHECK_FALSE(r.image_auc_std.has_value());
    CHECK(r.seeds[0].shots.size() == 1);
    CHECK(report_text(r).find("+-") == std::string::npos);
  }
  SUBCASE("duplicate member keeps the AUCs") {
    p.n_seeds = 1;
    auto single = run_experiment(ds, model, p);
    p.members = {Member::maeday, Member::maeday};
    auto doubled = run_experiment(ds, model, p);
    CHECK(doubled.seeds[0].image_auc == single.seeds[0].image_auc);
    CHECK(doubled.seeds[0].pixel_auc == single.seeds[0].pixel_auc);
  }
  SUBCASE("ensemble with the embedding baseline") {
    p.n_seeds = 2;
    p.k_shots = 2;
    p.members = {Member::maeday, Member::embed};
    auto r = run_experiment(ds, model, p);
    for (const auto& s : r.seeds) {
      CHECK(s.members.size() == 2);
      CHECK((s.image_auc >= 0.0 && s.image_auc <= 1.0));
    }
    auto again = run_experiment(ds, model, p);
    CHECK(report_csv(again) == report_csv(r));
    p.jobs = 3;
    CHECK(report_csv(run_experiment(ds, model, p)) == report_csv(r));
  }
  SUBCASE("rejections") {
    p.k_shots = 5;
    CHECK_THROWS(run_experiment(ds, model, p));
    p.k_shots = 0;
    p.members = {Member::embed};
    CHECK_THROWS(run_experiment(ds, model, p));
  }
}

TEST_CASE("report csv schema") {
  EvalReport r;
  r.class_name = "wood-grain";
  r.protocol.k_shots = 1;
  r.seeds.push_back({7, {0}, 0.5, 0.25, {}});
  CHECK(report_csv(r) == "class,k,seed,image_auc,pixel_auc\nwood-grain,1,7,0.500000,0.250000\n");
}

TEST_CASE("sweep_repetitions") {
  auto ds = tiny_dataset();
  MaeModel<float> model(small(), 5);
  SweepOptions opt;
  opt.pool_size = 8;
  opt.scoring_seed = 9;
  std::vector<std::size_t> ns{1, 2, 8};
  auto points = sweep_repetitions(ds, model, ns, opt);
  REQUIRE(points.size() == 3);
  CHECK(points[2].n_repetitions == 8);

  Protocol p;
  p.n_seeds = 1;
  p.n_repetitions = 8;
  p.scoring_seed = 9;
  auto direct = run_experiment(ds, model, p);
  CHECK(points[2].image_auc == direct.seeds[0].image_auc);
  CHECK(points[2].pixel_auc == direct.seeds[0].pixel_auc);

  std::vector<std::size_t> too_many{9};
  CHECK_THROWS(sweep_repetitions(ds, model, too_many, opt));
  std::vector<std::size_t> zero{0};
  CHECK_THROWS(sweep_repetitions(ds, model, zero, opt));
  CHECK(sweep_csv(points).rfind("n,image_auc,pixel_auc\n", 0) == 0);
}
