#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maeday/data.hpp"
#include "maeday/lora.hpp"
#include "maeday/model.hpp"
#include "maeday/scoring.hpp"

namespace maeday {

// Mann-Whitney AUC with midranks for ties: P(pos > neg) + 0.5 P(pos == neg).
// Labels are 0/1 and both classes must be present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Pools every pixel of every map into one ROC curve. Each map is bilinearly
// resized to its mask's resolution first. Normal images pass an all-zero mask.
double pixel_auc(std::span<const Map> maps, std::span<const Map> masks);

// Ground-truth mask of a sample, or zeros of the given size when it has none.
Map mask_or_zeros(const Sample& sample, std::size_t height, std::size_t width);

enum class Member { maeday, embed };
const char* to_string(Member member);
Member parse_member(const std::string& name);

struct Protocol {
  std::size_t k_shots = 0;
  std::size_t n_seeds = 3;
  // Shot seed i is seed_base + i, so every method sees the same shots.
  std::uint64_t seed_base = 0;
  // Image j of the test set draws its masks from Rng::derive(scoring_seed, j).
  std::uint64_t scoring_seed = 0;
  std::size_t n_repetitions = 32;
  double mask_ratio = 0.75;
  GaussianKernel kernel = gaussian_kernel(7, 1.4);
  std::vector<Member> members{Member::maeday};
  bool normalize_ensemble = false;
  FinetuneConfig finetune;
  double coreset_fraction = 1.0;
  std::size_t jobs = 1;
};

struct MemberAuc {
  Member member;
  double image_auc;
  double pixel_auc;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<std::size_t> shots;  // indices into the train split
  double image_auc = 0.0;
  double pixel_auc = 0.0;
  std::vector<MemberAuc> members;  // per-member AUCs (same order as the protocol)
};

struct EvalReport {
  std::string class_name;
  Protocol protocol;
  std::vector<SeedResult> seeds;
  double image_auc_mean = 0.0;
  double pixel_auc_mean = 0.0;
  // Population standard deviation; present only with two or more seeds.
  std::optional<double> image_auc_std;
  std::optional<double> pixel_auc_std;
};

// For each shot seed: draw k shots from the train split, adapt a fresh copy
// of the model on them (k = 0 skips adaptation), score the whole test set
// with every member, ensemble by summation and compute both AUCs.
EvalReport run_experiment(const Dataset& dataset, const MaeModel<float>& model, const Protocol& protocol);

// Columns: class,k,seed,image_auc,pixel_auc
std::string report_csv(const EvalReport& report);
std::string report_text(const EvalReport& report);

struct SweepOptions {
  std::size_t pool_size = 64;
  double mask_ratio = 0.75;
  GaussianKernel kernel = gaussian_kernel(7, 1.4);
  std::uint64_t scoring_seed = 0;
  std::size_t jobs = 1;
};

struct SweepPoint {
  std::size_t n_repetitions;
  double image_auc;
  double pixel_auc;
};

// Scores each test image once with a pool of pool_size masks; the AUC at N
// uses the mean of the first N per-mask error maps.
std::vector<SweepPoint> sweep_repetitions(const Dataset& dataset, const MaeModel<float>& model,
                                          std::span<const std::size_t> n_list, const SweepOptions& options);

// Columns: n,image_auc,pixel_auc
std::string sweep_csv(std::span<const SweepPoint> points);

}  // namespace maeday
