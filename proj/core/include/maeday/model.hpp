#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maeday/autograd.hpp"
#include "maeday/checkpoint.hpp"
#include "maeday/optim.hpp"
#include "maeday/rng.hpp"
#include "maeday/tensor.hpp"

namespace maeday {

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t num_heads = 4;
  std::size_t decoder_embed_dim = 32;
  std::size_t decoder_depth = 2;
  std::size_t decoder_num_heads = 4;
  std::size_t mlp_ratio = 4;
  double mask_ratio = 0.75;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t token_count() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }

  void write(Checkpoint& ck) const;
  static ModelConfig read(const Checkpoint& ck);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// true = token is visible to the encoder.
using Visibility = std::vector<bool>;

// Number of visible tokens, round-half-up of (1 - mask_ratio) * tokens.
// Throws when the result would leave no visible or no masked token.
std::size_t visible_count(std::size_t tokens, double mask_ratio);

Visibility sample_mask(std::size_t tokens, double mask_ratio, Rng& rng);

struct MaskSet {
  std::vector<Visibility> masks;

  static MaskSet sample(std::size_t tokens, double mask_ratio, std::size_t count, Rng& rng);
  std::size_t size() const { return masks.size(); }
};

std::vector<std::size_t> visible_indices(const Visibility& mask);
std::vector<std::size_t> masked_indices(const Visibility& mask);

// H x W x C image -> T x (p*p*C) tokens. Patches in row-major grid order,
// each flattened row-major with channels last.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch_size);
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, std::size_t patch_size, std::size_t image_size, std::size_t channels);

// Fixed 2-D sine/cosine table, one row per grid cell (row-major).
Tensor<double> sincos_position_table(std::size_t dim, std::size_t grid);

template <typename T>
struct LoraAdapter {
  Parameter<T> down;  // rank x in
  Parameter<T> up;    // out x rank
  std::size_t rank() const { return down.value().dim(0); }
};

// y = x W^T + b, plus (x A^T) B^T when an adapter is attached.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng);

  Var<T> forward(const Var<T>& x) const;

  std::size_t in_features() const { return weight_.value().dim(1); }
  std::size_t out_features() const { return weight_.value().dim(0); }
  Parameter<T>& weight() { return weight_; }
  const Parameter<T>& weight() const { return weight_; }
  Parameter<T>& bias() { return bias_; }
  const Parameter<T>& bias() const { return bias_; }

  std::optional<LoraAdapter<T>>& adapter() { return adapter_; }
  const std::optional<LoraAdapter<T>>& adapter() const { return adapter_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  std::optional<LoraAdapter<T>> adapter_;
};

template <typename T>
struct LayerNorm {
  Parameter<T> gain;
  Parameter<T> bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Var<T> forward(const Var<T>& x) const;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <typename T>
struct NamedLinear {
  std::string name;
  Linear<T>* linear;
};

// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& params);
  void collect(const std::string& prefix, std::vector<NamedLinear<T>>& linears);

 private:
  std::size_t heads_ = 1;
  LayerNorm<T> norm1_;
  Linear<T> query_, key_, value_, proj_;
  LayerNorm<T> norm2_;
  Linear<T> fc1_, fc2_;
};

enum class AdapterState { none, attached, merged };

template <typename T>
class MaeModel {
 public:
  // Truncated-normal (sigma 0.02) projections and mask token, zero biases, unit norms.
  MaeModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Encoder over the listed visible tokens, in the given order. Output is keep x embed_dim.
  Var<T> encode(const Tensor<T>& tokens, std::span<const std::size_t> visible) const;
  // Full decoder prediction for every token position, T x patch_dim.
  Var<T> forward(const Tensor<T>& tokens, std::span<const std::size_t> visible) const;
  // Reconstructed image from the visible subset; no graph is recorded.
  Tensor<T> reconstruct(const Tensor<T>& image, const Visibility& mask) const;

  std::vector<NamedParameter<T>> named_parameters();
  std::vector<NamedLinear<T>> named_linears();
  std::vector<Parameter<T>*> trainable_parameters();
  std::size_t trainable_parameter_count();

  AdapterState adapter_state() const { return adapter_state_; }
  void set_adapter_state(AdapterState state) { adapter_state_ = state; }

  Checkpoint to_checkpoint();
  static MaeModel from_checkpoint(const Checkpoint& ck);
  void save(const std::filesystem::path& path) { to_checkpoint().save(path); }
  static MaeModel load(const std::filesystem::path& path) { return from_checkpoint(Checkpoint::load(path)); }

 private:
  ModelConfig config_;
  Linear<T> patch_embed_;
  Var<T> encoder_pos_;
  std::vector<TransformerBlock<T>> encoder_blocks_;
  LayerNorm<T> encoder_norm_;
  Linear<T> decoder_embed_;
  Parameter<T> mask_token_;
  Var<T> decoder_pos_;
  std::vector<TransformerBlock<T>> decoder_blocks_;
  LayerNorm<T> decoder_norm_;
  Linear<T> head_;
  AdapterState adapter_state_ = AdapterState::none;
};

enum class LossSupport { masked_only, all_patches };

// Mean squared pixel error between the prediction and the patchified image,
// averaged over the masked tokens or over every token.
template <typename T>
Var<T> reconstruction_loss(const MaeModel<T>& model, const Tensor<T>& tokens, const Visibility& mask,
                           LossSupport support);

enum class OptimizerKind { adamw, sgd };

struct PretrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::adamw;
  AdamWConfig adamw{1.5e-3, 0.9, 0.95, 1e-8, 0.05};
  SgdConfig sgd{};
  // Linear warmup then cosine decay to 0 (AdamW only).
  std::size_t warmup_steps = 50;
  // Per-sample random square crop (side fraction in [crop_min, 1]) resized
  // back, then random horizontal and vertical flips. Off when crop_min is 1
  // and flips are disabled.
  double crop_min = 1.0;
  bool flips = false;
  LossSupport loss_support = LossSupport::masked_only;
};

// Self-supervised masked-patch pretraining. Returns one mean batch loss per step.
std::vector<double> pretrain(MaeModel<float>& model, std::span<const Image> corpus, const PretrainConfig& config,
                             Rng& rng);

extern template class Linear<float>;
extern template class Linear<double>;
extern template class TransformerBlock<float>;
extern template class TransformerBlock<double>;
extern template class MaeModel<float>;
extern template class MaeModel<double>;

}  // namespace maeday
