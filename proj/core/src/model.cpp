#include "maeday/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "maeday/data.hpp"

namespace maeday {

namespace {

constexpr double kInitSigma = 0.02;

template <typename T>
Tensor<T> truncated_normal(Shape shape, Rng& rng) {
  Tensor<T> out(std::move(shape));
  for (auto& v : out.values()) v = static_cast<T>(rng.truncated_normal(kInitSigma));
  return out;
}

std::size_t parse_size(const Checkpoint& ck, const std::string& key) {
  return static_cast<std::size_t>(std::stoull(ck.require(key)));
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (patch_size == 0 || image_size == 0) fail("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) fail("image_size must be a multiple of patch_size");
  if (channels == 0) fail("channels must be positive");
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) fail("embed_dim must be a multiple of num_heads");
  if (decoder_embed_dim == 0 || decoder_num_heads == 0 || decoder_embed_dim % decoder_num_heads != 0)
    fail("decoder_embed_dim must be a multiple of decoder_num_heads");
  if (embed_dim % 4 != 0 || decoder_embed_dim % 4 != 0)
    fail("embedding widths must be multiples of 4 for the 2-D sine/cosine table");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) fail("mask_ratio must lie in [0, 1)");
}

void ModelConfig::write(Checkpoint& ck) const {
  ck.set("image_size", std::to_string(image_size));
  ck.set("patch_size", std::to_string(patch_size));
  ck.set("channels", std::to_string(channels));
  ck.set("embed_dim", std::to_string(embed_dim));
  ck.set("depth", std::to_string(depth));
  ck.set("num_heads", std::to_string(num_heads));
  ck.set("decoder_embed_dim", std::to_string(decoder_embed_dim));
  ck.set("decoder_depth", std::to_string(decoder_depth));
  ck.set("decoder_num_heads", std::to_string(decoder_num_heads));
  ck.set("mlp_ratio", std::to_string(mlp_ratio));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", mask_ratio);
  ck.set("mask_ratio", buf);
}

ModelConfig ModelConfig::read(const Checkpoint& ck) {
  ModelConfig cfg;
  cfg.image_size = parse_size(ck, "image_size");
  cfg.patch_size = parse_size(ck, "patch_size");
  cfg.channels = parse_size(ck, "channels");
  cfg.embed_dim = parse_size(ck, "embed_dim");
  cfg.depth = parse_size(ck, "depth");
  cfg.num_heads = parse_size(ck, "num_heads");
  cfg.decoder_embed_dim = parse_size(ck, "decoder_embed_dim");
  cfg.decoder_depth = parse_size(ck, "decoder_depth");
  cfg.decoder_num_heads = parse_size(ck, "decoder_num_heads");
  cfg.mlp_ratio = parse_size(ck, "mlp_ratio");
  cfg.mask_ratio = std::stod(ck.require("mask_ratio"));
  cfg.validate();
  return cfg;
}

std::size_t visible_count(std::size_t tokens, double mask_ratio) {
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw std::invalid_argument("mask ratio must lie in (0, 1)");
  const auto keep = static_cast<std::size_t>(std::floor((1.0 - mask_ratio) * static_cast<double>(tokens) + 0.5));
  if (keep == 0 || keep >= tokens) {
    throw std::invalid_argument("mask ratio " + std::to_string(mask_ratio) + " over " + std::to_string(tokens) +
                                " tokens leaves " + std::to_string(keep) + " visible (degenerate)");
  }
  return keep;
}

Visibility sample_mask(std::size_t tokens, double mask_ratio, Rng& rng) {
  const std::size_t keep = visible_count(tokens, mask_ratio);
  Visibility mask(tokens, false);
  for (auto i : rng.sample_without_replacement(tokens, keep)) mask[i] = true;
  return mask;
}

MaskSet MaskSet::sample(std::size_t tokens, double mask_ratio, std::size_t count, Rng& rng) {
  MaskSet set;
  set.masks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) set.masks.push_back(sample_mask(tokens, mask_ratio, rng));
  return set;
}

std::vector<std::size_t> visible_indices(const Visibility& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> masked_indices(const Visibility& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) out.push_back(i);
  return out;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch_size) {
  if (image.rank() != 3) throw std::invalid_argument("patchify: expected H x W x C, got " + shape_to_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h != w) throw std::invalid_argument("patchify: image must be square");
  if (patch_size == 0 || h % patch_size != 0)
    throw std::invalid_argument("patchify: image size " + std::to_string(h) + " is not divisible by patch size " +
                                std::to_string(patch_size));
  const std::size_t g = h / patch_size, row_len = patch_size * c;
  Tensor<T> tokens({g * g, patch_size * row_len});
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      T* dst = tokens.data() + (gy * g + gx) * tokens.cols();
      for (std::size_t py = 0; py < patch_size; ++py) {
        const T* src = image.data() + ((gy * patch_size + py) * w + gx * patch_size) * c;
        std::copy_n(src, row_len, dst + py * row_len);
      }
    }
  return tokens;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, std::size_t patch_size, std::size_t image_size, std::size_t channels) {
  if (patch_size == 0 || image_size % patch_size != 0)
    throw std::invalid_argument("unpatchify: image size not divisible by patch size");
  const std::size_t g = image_size / patch_size, row_len = patch_size * channels;
  if (tokens.rank() != 2 || tokens.dim(0) != g * g || tokens.dim(1) != patch_size * row_len)
    throw std::invalid_argument("unpatchify: token shape " + shape_to_string(tokens.shape()) + " does not match geometry");
  Tensor<T> image({image_size, image_size, channels});
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      const T* src = tokens.data() + (gy * g + gx) * tokens.cols();
      for (std::size_t py = 0; py < patch_size; ++py) {
        T* dst = image.data() + ((gy * patch_size + py) * image_size + gx * patch_size) * channels;
        std::copy_n(src + py * row_len, row_len, dst);
      }
    }
  return image;
}

Tensor<double> sincos_position_table(std::size_t dim, std::size_t grid) {
  if (dim % 4 != 0) throw std::invalid_argument("position table width must be a multiple of 4");
  const std::size_t quarter = dim / 4;
  Tensor<double> table({grid * grid, dim});
  for (std::size_t r = 0; r < grid; ++r)
    for (std::size_t c = 0; c < grid; ++c) {
      double* row = table.data() + (r * grid + c) * dim;
      // First half encodes the column, second half the row.
      const double coords[2] = {static_cast<double>(c), static_cast<double>(r)};
      for (std::size_t half = 0; half < 2; ++half)
        for (std::size_t i = 0; i < quarter; ++i) {
          const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
          row[half * 2 * quarter + i] = std::sin(coords[half] * omega);
          row[half * 2 * quarter + quarter + i] = std::cos(coords[half] * omega);
        }
    }
  return table;
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight_(truncated_normal<T>({out_features, in_features}, rng)), bias_(Tensor<T>({out_features})) {}

template <typename T>
Var<T> Linear<T>::forward(const Var<T>& x) const {
  Var<T> y = add_row(matmul_nt(x, weight_.var()), bias_.var());
  if (adapter_) y = add(y, matmul_nt(matmul_nt(x, adapter_->down.var()), adapter_->up.var()));
  return y;
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim) : gain(Tensor<T>({dim}, T{1})), bias(Tensor<T>({dim})) {}

template <typename T>
Var<T> LayerNorm<T>::forward(const Var<T>& x) const {
  return layernorm(x, gain.var(), bias.var(), T(1e-6));
}

template <typename T>
TransformerBlock<T>::TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng)
    : heads_(heads),
      norm1_(dim),
      query_(dim, dim, rng),
      key_(dim, dim, rng),
      value_(dim, dim, rng),
      proj_(dim, dim, rng),
      norm2_(dim),
      fc1_(dim, dim * mlp_ratio, rng),
      fc2_(dim * mlp_ratio, dim, rng) {}

template <typename T>
Var<T> TransformerBlock<T>::forward(const Var<T>& x) const {
  const std::size_t dim = x.shape()[1];
  const std::size_t head_dim = dim / heads_;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(head_dim));
  Var<T> h = norm1_.forward(x);
  Var<T> q = query_.forward(h), k = key_.forward(h), v = value_.forward(h);
  std::vector<Var<T>> outputs;
  outputs.reserve(heads_);
  for (std::size_t i = 0; i < heads_; ++i) {
    Var<T> qi = slice_cols(q, i * head_dim, head_dim);
    Var<T> ki = slice_cols(k, i * head_dim, head_dim);
    Var<T> vi = slice_cols(v, i * head_dim, head_dim);
    Var<T> attn = softmax(scale(matmul_nt(qi, ki), inv_sqrt));
    outputs.push_back(matmul(attn, vi));
  }
  Var<T> out = add(x, proj_.forward(heads_ == 1 ? outputs.front() : concat_cols(outputs)));
  return add(out, fc2_.forward(gelu(fc1_.forward(norm2_.forward(out)))));
}

template <typename T>
void TransformerBlock<T>::collect(const std::string& prefix, std::vector<NamedParameter<T>>& params) {
  params.push_back({prefix + "norm1.gain", &norm1_.gain});
  params.push_back({prefix + "norm1.bias", &norm1_.bias});
  std::vector<NamedLinear<T>> linears;
  collect(prefix, linears);
  for (auto& [name, lin] : linears) {
    params.push_back({name + ".weight", &lin->weight()});
    params.push_back({name + ".bias", &lin->bias()});
  }
  params.push_back({prefix + "norm2.gain", &norm2_.gain});
  params.push_back({prefix + "norm2.bias", &norm2_.bias});
}

template <typename T>
void TransformerBlock<T>::collect(const std::string& prefix, std::vector<NamedLinear<T>>& linears) {
  linears.push_back({prefix + "attn.query", &query_});
  linears.push_back({prefix + "attn.key", &key_});
  linears.push_back({prefix + "attn.value", &value_});
  linears.push_back({prefix + "attn.proj", &proj_});
  linears.push_back({prefix + "mlp.fc1", &fc1_});
  linears.push_back({prefix + "mlp.fc2", &fc2_});
}

template <typename T>
MaeModel<T>::MaeModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t grid = config_.grid();
  patch_embed_ = Linear<T>(config_.patch_dim(), config_.embed_dim, rng);
  encoder_pos_ = Var<T>::constant(sincos_position_table(config_.embed_dim, grid).template cast<T>());
  for (std::size_t i = 0; i < config_.depth; ++i)
    encoder_blocks_.emplace_back(config_.embed_dim, config_.num_heads, config_.mlp_ratio, rng);
  encoder_norm_ = LayerNorm<T>(config_.embed_dim);
  decoder_embed_ = Linear<T>(config_.embed_dim, config_.decoder_embed_dim, rng);
  mask_token_ = Parameter<T>(truncated_normal<T>({config_.decoder_embed_dim}, rng));
  decoder_pos_ = Var<T>::constant(sincos_position_table(config_.decoder_embed_dim, grid).template cast<T>());
  for (std::size_t i = 0; i < config_.decoder_depth; ++i)
    decoder_blocks_.emplace_back(config_.decoder_embed_dim, config_.decoder_num_heads, config_.mlp_ratio, rng);
  decoder_norm_ = LayerNorm<T>(config_.decoder_embed_dim);
  head_ = Linear<T>(config_.decoder_embed_dim, config_.patch_dim(), rng);
}

template <typename T>
Var<T> MaeModel<T>::encode(const Tensor<T>& tokens, std::span<const std::size_t> visible) const {
  const std::size_t n_tokens = config_.token_count();
  if (tokens.rank() != 2 || tokens.dim(0) != n_tokens || tokens.dim(1) != config_.patch_dim())
    throw std::invalid_argument("encode: token shape " + shape_to_string(tokens.shape()) + " does not match config");
  if (visible.empty()) throw std::invalid_argument("encode: no visible tokens");
  Var<T> x = gather_rows(Var<T>::constant(tokens), visible);
  x = add(patch_embed_.forward(x), gather_rows(encoder_pos_, visible));
  for (const auto& block : encoder_blocks_) x = block.forward(x);
  return encoder_norm_.forward(x);
}

template <typename T>
Var<T> MaeModel<T>::forward(const Tensor<T>& tokens, std::span<const std::size_t> visible) const {
  const std::size_t n_tokens = config_.token_count();
  Var<T> encoded = encode(tokens, visible);
  Var<T> x = scatter_rows(decoder_embed_.forward(encoded), visible, n_tokens);
  std::vector<bool> seen(n_tokens, false);
  for (auto i : visible) seen[i] = true;
  const auto hidden = masked_indices(seen);
  if (!hidden.empty()) x = add(x, scatter_rows(broadcast_rows(mask_token_.var(), hidden.size()), hidden, n_tokens));
  x = add(x, decoder_pos_);
  for (const auto& block : decoder_blocks_) x = block.forward(x);
  return head_.forward(decoder_norm_.forward(x));
}

template <typename T>
Tensor<T> MaeModel<T>::reconstruct(const Tensor<T>& image, const Visibility& mask) const {
  const auto& c = config_;
  if (image.rank() != 3 || image.dim(0) != c.image_size || image.dim(1) != c.image_size || image.dim(2) != c.channels)
    throw std::invalid_argument("reconstruct: image shape " + shape_to_string(image.shape()) + " does not match config");
  if (mask.size() != c.token_count())
    throw std::invalid_argument("reconstruct: mask covers " + std::to_string(mask.size()) + " tokens, model has " +
                                std::to_string(c.token_count()));
  NoGradGuard no_grad;
  const auto visible = visible_indices(mask);
  Var<T> pred = forward(patchify(image, c.patch_size), visible);
  return unpatchify(pred.value(), c.patch_size, c.image_size, c.channels);
}

template <typename T>
std::vector<NamedLinear<T>> MaeModel<T>::named_linears() {
  std::vector<NamedLinear<T>> out{{"patch_embed", &patch_embed_}};
  for (std::size_t i = 0; i < encoder_blocks_.size(); ++i)
    encoder_blocks_[i].collect("encoder." + std::to_string(i) + ".", out);
  out.push_back({"decoder_embed", &decoder_embed_});
  for (std::size_t i = 0; i < decoder_blocks_.size(); ++i)
    decoder_blocks_[i].collect("decoder." + std::to_string(i) + ".", out);
  out.push_back({"head", &head_});
  return out;
}

template <typename T>
std::vector<NamedParameter<T>> MaeModel<T>::named_parameters() {
  std::vector<NamedParameter<T>> out;
  auto add_linear = [&out](const std::string& name, Linear<T>& lin) {
    out.push_back({name + ".weight", &lin.weight()});
    out.push_back({name + ".bias", &lin.bias()});
  };
  add_linear("patch_embed", patch_embed_);
  for (std::size_t i = 0; i < encoder_blocks_.size(); ++i)
    encoder_blocks_[i].collect("encoder." + std::to_string(i) + ".", out);
  out.push_back({"encoder_norm.gain", &encoder_norm_.gain});
  out.push_back({"encoder_norm.bias", &encoder_norm_.bias});
  add_linear("decoder_embed", decoder_embed_);
  out.push_back({"mask_token", &mask_token_});
  for (std::size_t i = 0; i < decoder_blocks_.size(); ++i)
    decoder_blocks_[i].collect("decoder." + std::to_string(i) + ".", out);
  out.push_back({"decoder_norm.gain", &decoder_norm_.gain});
  out.push_back({"decoder_norm.bias", &decoder_norm_.bias});
  add_linear("head", head_);
  for (auto& [name, lin] : named_linears()) {
    if (lin->adapter()) {
      out.push_back({name + ".lora_down", &lin->adapter()->down});
      out.push_back({name + ".lora_up", &lin->adapter()->up});
    }
  }
  return out;
}

template <typename T>
std::vector<Parameter<T>*> MaeModel<T>::trainable_parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& [name, p] : named_parameters())
    if (p->trainable()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t MaeModel<T>::trainable_parameter_count() {
  std::size_t total = 0;
  for (auto* p : trainable_parameters()) total += p->value().size();
  return total;
}

template <typename T>
Checkpoint MaeModel<T>::to_checkpoint() {
  Checkpoint ck;
  ck.set("kind", "mae_model");
  config_.write(ck);
  ck.set("adapter_state", adapter_state_ == AdapterState::none       ? "none"
                          : adapter_state_ == AdapterState::attached ? "attached"
                                                                     : "merged");
  for (auto& [name, p] : named_parameters()) ck.add_tensor(name, p->value().template cast<float>());
  return ck;
}

template <typename T>
MaeModel<T> MaeModel<T>::from_checkpoint(const Checkpoint& ck) {
  if (ck.get("kind").value_or("") != "mae_model") throw std::runtime_error("checkpoint does not hold an MAE model");
  MaeModel model(ModelConfig::read(ck), 0);
  const std::string state = ck.get("adapter_state").value_or("none");
  // Adapters are recreated before parameters are filled so their tensors are found by name.
  for (auto& [name, lin] : model.named_linears()) {
    if (ck.has_tensor(name + ".lora_down")) {
      const auto& down = ck.tensor(name + ".lora_down");
      const auto& up = ck.tensor(name + ".lora_up");
      lin->adapter() = LoraAdapter<T>{Parameter<T>(down.template cast<T>()), Parameter<T>(up.template cast<T>())};
    }
  }
  model.adapter_state_ = state == "attached" ? AdapterState::attached
                         : state == "merged" ? AdapterState::merged
                                             : AdapterState::none;
  const bool frozen_host = model.adapter_state_ == AdapterState::attached;
  for (auto& [name, p] : model.named_parameters()) {
    const auto& t = ck.tensor(name);
    if (t.shape() != p->value().shape())
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + shape_to_string(t.shape()) +
                               ", model expects " + shape_to_string(p->value().shape()));
    p->value() = t.template cast<T>();
    const bool is_adapter = name.ends_with(".lora_down") || name.ends_with(".lora_up");
    p->set_trainable(!frozen_host || is_adapter);
  }
  return model;
}

template <typename T>
Var<T> reconstruction_loss(const MaeModel<T>& model, const Tensor<T>& tokens, const Visibility& mask,
                           LossSupport support) {
  const auto visible = visible_indices(mask);
  Var<T> pred = model.forward(tokens, visible);
  std::vector<T> weights(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    weights[i] = (support == LossSupport::all_patches || !mask[i]) ? T{1} : T{0};
  return weighted_row_mse(pred, tokens, std::span<const T>(weights));
}

std::vector<double> pretrain(MaeModel<float>& model, std::span<const Image> corpus, const PretrainConfig& config,
                             Rng& rng) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (config.batch_size == 0) throw std::invalid_argument("pretrain: batch size must be positive");
  const auto& mc = model.config();
  for (const auto& image : corpus)
    if (image.shape() != Shape{mc.image_size, mc.image_size, mc.channels})
      throw std::invalid_argument("pretrain: corpus image shape " + shape_to_string(image.shape()) +
                                  " does not match model resolution");
  std::vector<double> losses;
  if (config.steps == 0) return losses;

  if (!(config.crop_min > 0.0 && config.crop_min <= 1.0))
    throw std::invalid_argument("pretrain: crop_min must lie in (0, 1]");
  const std::size_t size = mc.image_size;
  auto draw = [&](const Image& image) {
    if (config.crop_min == 1.0 && !config.flips) return patchify(image, mc.patch_size);
    const double fraction = rng.uniform(config.crop_min, 1.0);
    const auto side = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(size))));
    const std::size_t top = rng.below(size - side + 1), left = rng.below(size - side + 1);
    const bool flip_x = config.flips && rng.below(2) == 1;
    const bool flip_y = config.flips && rng.below(2) == 1;
    Image crop({side, side, mc.channels});
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const std::size_t sy = top + (flip_y ? side - 1 - y : y), sx = left + (flip_x ? side - 1 - x : x);
        for (std::size_t c = 0; c < mc.channels; ++c) crop.at(y, x, c) = image.at(sy, sx, c);
      }
    return patchify(resize(crop, size, size), mc.patch_size);
  };

  auto params = model.trainable_parameters();
  std::optional<AdamW<float>> adamw;
  std::optional<Sgd<float>> sgd;
  if (config.optimizer == OptimizerKind::adamw)
    adamw.emplace(params, config.adamw);
  else
    sgd.emplace(params, config.sgd);

  const float inv_batch = 1.0f / static_cast<float>(config.batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto sample = draw(corpus[rng.below(corpus.size())]);
      const Visibility mask = sample_mask(mc.token_count(), mc.mask_ratio, rng);
      Var<float> loss = reconstruction_loss(model, sample, mask, config.loss_support);
      batch_loss += loss.value()[0];
      scale(loss, inv_batch).backward();
    }
    losses.push_back(batch_loss / static_cast<double>(config.batch_size));
    if (adamw) {
      double lr = config.adamw.lr;
      if (step < config.warmup_steps) {
        lr *= static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps);
      } else {
        const double span = static_cast<double>(config.steps - config.warmup_steps);
        const double progress = span > 0 ? static_cast<double>(step - config.warmup_steps) / span : 1.0;
        lr *= 0.5 * (1.0 + std::cos(M_PI * progress));
      }
      adamw->set_lr(lr);
      adamw->step();
    } else {
      sgd->step();
    }
  }
  return losses;
}

template Tensor<float> patchify(const Tensor<float>&, std::size_t);
template Tensor<double> patchify(const Tensor<double>&, std::size_t);
template Tensor<float> unpatchify(const Tensor<float>&, std::size_t, std::size_t, std::size_t);
template Tensor<double> unpatchify(const Tensor<double>&, std::size_t, std::size_t, std::size_t);
template class Linear<float>;
template class Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;
template class MaeModel<float>;
template class MaeModel<double>;
template Var<float> reconstruction_loss(const MaeModel<float>&, const Tensor<float>&, const Visibility&, LossSupport);
template Var<double> reconstruction_loss(const MaeModel<double>&, const Tensor<double>&, const Visibility&, LossSupport);

}  // namespace maeday
