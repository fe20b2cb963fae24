#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maeday/model.hpp"
#include "maeday/rng.hpp"

namespace maeday {

struct FinetuneConfig {
  std::size_t iterations = 50;
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 0.05;
  std::size_t batch_size = 32;
  std::size_t rank = 32;
  // Random square crop with side in [crop_min, crop_max] of the image side, resized back.
  double crop_min = 0.8;
  double crop_max = 1.0;
  // Random rotation, uniform in [-rotation_degrees, +rotation_degrees].
  double rotation_degrees = 10.0;
  // Update the host weights directly instead of training adapters.
  bool full_finetune = false;

  // Recipe used for the full-finetune ablation: same settings, lr 1e-4.
  static FinetuneConfig full_finetune_defaults();
};

// Standard deviation of the truncated-normal init of the down projection.
inline constexpr double kAdapterInitSigma = 0.02;

// Adds a rank-r adapter (down: r x in, up: out x r, up zero) to every weight
// matrix and freezes all host parameters. Throws if rank exceeds
// min(out, in) of any matrix or adapters are already present.
template <typename T>
void attach(MaeModel<T>& model, std::size_t rank, Rng& rng, double init_sigma = kAdapterInitSigma);

// Folds every adapter into its host matrix, W <- W + up * down, removes the
// adapters and unfreezes the host. Throws unless adapters are attached.
template <typename T>
void merge(MaeModel<T>& model);

// Sum over host matrices of rank * (in + out).
template <typename T>
std::size_t expected_adapter_parameter_count(MaeModel<T>& model, std::size_t rank);

// Random crop (resized back to the input size) followed by a random rotation
// with mirrored fill; bilinear sampling throughout.
Image augment(const Image& image, const FinetuneConfig& config, Rng& rng);

// Few-shot finetuning on normal shots with loss on all patches. Batches cycle
// through the shots, each entry with its own augmentation and random mask.
// Only trainable parameters move: the adapters, or every host parameter when
// full_finetune is set. Returns one mean batch loss per iteration.
std::vector<double> finetune(MaeModel<float>& model, std::span<const Image> shots, const FinetuneConfig& config,
                             Rng& rng);

// attach -> finetune -> merge on a copy of the model (or a plain full finetune).
MaeModel<float> adapt(const MaeModel<float>& model, std::span<const Image> shots, const FinetuneConfig& config,
                      Rng& rng, std::vector<double>* losses = nullptr);

}  // namespace maeday
