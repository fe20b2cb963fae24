#include "maeday/lora.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "maeday/data.hpp"

namespace maeday {

FinetuneConfig FinetuneConfig::full_finetune_defaults() {
  FinetuneConfig cfg;
  cfg.full_finetune = true;
  cfg.lr = 1e-4;
  return cfg;
}

template <typename T>
void attach(MaeModel<T>& model, std::size_t rank, Rng& rng, double init_sigma) {
  if (rank == 0) throw std::invalid_argument("attach: rank must be at least 1");
  if (model.adapter_state() == AdapterState::attached) throw std::logic_error("attach: adapters are already attached");
  auto linears = model.named_linears();
  for (const auto& [name, lin] : linears) {
    const std::size_t limit = std::min(lin->in_features(), lin->out_features());
    if (rank > limit)
      throw std::invalid_argument("attach: rank " + std::to_string(rank) + " exceeds min(out, in) = " +
                                  std::to_string(limit) + " of " + name);
  }
  for (auto& [name, p] : model.named_parameters()) p->set_trainable(false);
  for (auto& [name, lin] : linears) {
    Tensor<T> down({rank, lin->in_features()});
    for (auto& v : down.values()) v = static_cast<T>(rng.truncated_normal(init_sigma));
    lin->adapter() = LoraAdapter<T>{Parameter<T>(std::move(down)), Parameter<T>(Tensor<T>({lin->out_features(), rank}))};
  }
  model.set_adapter_state(AdapterState::attached);
}

template <typename T>
void merge(MaeModel<T>& model) {
  if (model.adapter_state() != AdapterState::attached)
    throw std::logic_error(model.adapter_state() == AdapterState::merged ? "merge: adapters were already merged"
                                                                          : "merge: no adapters attached");
  for (auto& [name, lin] : model.named_linears()) {
    auto& adapter = lin->adapter();
    if (!adapter) continue;
    const std::size_t out = lin->out_features(), in = lin->in_features(), r = adapter->rank();
    const auto& up = adapter->up.value();
    const auto& down = adapter->down.value();
    auto& w = lin->weight().value();
    for (std::size_t i = 0; i < out; ++i)
      for (std::size_t j = 0; j < in; ++j) {
        T delta = 0;
        for (std::size_t k = 0; k < r; ++k) delta += up.at(i, k) * down.at(k, j);
        w.at(i, j) += delta;
      }
    adapter.reset();
  }
  for (auto& [name, p] : model.named_parameters()) p->set_trainable(true);
  model.set_adapter_state(AdapterState::merged);
}

template <typename T>
std::size_t expected_adapter_parameter_count(MaeModel<T>& model, std::size_t rank) {
  std::size_t total = 0;
  for (const auto& [name, lin] : model.named_linears()) total += rank * (lin->in_features() + lin->out_features());
  return total;
}

Image augment(const Image& image, const FinetuneConfig& config, Rng& rng) {
  if (image.rank() != 3) throw std::invalid_argument("augment: expected H x W x C");
  const std::size_t h = image.dim(0), w = image.dim(1), channels = image.dim(2);
  const double fraction = rng.uniform(config.crop_min, config.crop_max);
  const auto ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(h))));
  const auto cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(w))));
  const std::size_t top = rng.below(h - ch + 1), left = rng.below(w - cw + 1);
  Image crop({ch, cw, channels});
  for (std::size_t y = 0; y < ch; ++y)
    for (std::size_t x = 0; x < cw; ++x)
      for (std::size_t c = 0; c < channels; ++c) crop.at(y, x, c) = image.at(top + y, left + x, c);
  Image resized = resize(crop, h, w);

  const double angle = rng.uniform(-config.rotation_degrees, config.rotation_degrees) * M_PI / 180.0;
  if (angle == 0.0) return resized;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double cy = static_cast<double>(h) / 2.0, cx = static_cast<double>(w) / 2.0;
  Image out({h, w, channels});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse-rotate the output pixel center into the source.
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      const double sy = -dx * sa + dy * ca + cy - 0.5, sx = dx * ca + dy * sa + cx - 0.5;
      for (std::size_t c = 0; c < channels; ++c) out.at(y, x, c) = sample_mirrored(resized, sy, sx, c);
    }
  return out;
}

std::vector<double> finetune(MaeModel<float>& model, std::span<const Image> shots, const FinetuneConfig& config,
                             Rng& rng) {
  if (shots.empty()) throw std::invalid_argument("finetune: at least one shot is required");
  if (config.batch_size == 0) throw std::invalid_argument("finetune: batch size must be positive");
  const auto& mc = model.config();
  for (const auto& shot : shots)
    if (shot.shape() != Shape{mc.image_size, mc.image_size, mc.channels})
      throw std::invalid_argument("finetune: shot shape " + shape_to_string(shot.shape()) +
                                  " does not match model resolution");
  if (!config.full_finetune && model.adapter_state() != AdapterState::attached)
    throw std::logic_error("finetune: attach adapters first, or set full_finetune");

  std::vector<double> losses;
  if (config.iterations == 0) return losses;
  Sgd<float> optimizer(model.trainable_parameters(), SgdConfig{config.lr, config.momentum, config.weight_decay});
  const float inv_batch = 1.0f / static_cast<float>(config.batch_size);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const Image view = augment(shots[b % shots.size()], config, rng);
      const Visibility mask = sample_mask(mc.token_count(), mc.mask_ratio, rng);
      Var<float> loss = reconstruction_loss(model, patchify(view, mc.patch_size), mask, LossSupport::all_patches);
      batch_loss += loss.value()[0];
      scale(loss, inv_batch).backward();
    }
    losses.push_back(batch_loss / static_cast<double>(config.batch_size));
    optimizer.step();
  }
  return losses;
}

MaeModel<float> adapt(const MaeModel<float>& model, std::span<const Image> shots, const FinetuneConfig& config,
                      Rng& rng, std::vector<double>* losses) {
  MaeModel<float> adapted = model;
  if (config.full_finetune) {
    auto trace = finetune(adapted, shots, config, rng);
    if (losses) *losses = std::move(trace);
    return adapted;
  }
  attach(adapted, config.rank, rng);
  auto trace = finetune(adapted, shots, config, rng);
  merge(adapted);
  if (losses) *losses = std::move(trace);
  return adapted;
}

template void attach(MaeModel<float>&, std::size_t, Rng&, double);
template void attach(MaeModel<double>&, std::size_t, Rng&, double);
template void merge(MaeModel<float>&);
template void merge(MaeModel<double>&);
template std::size_t expected_adapter_parameter_count(MaeModel<float>&, std::size_t);
template std::size_t expected_adapter_parameter_count(MaeModel<double>&, std::size_t);

}  // namespace maeday
