#include "voila/perceiver/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "voila/error.hpp"
#include "voila/gaze/heatmap.hpp"
#include "voila/gaze/sweep.hpp"

namespace voila::perceiver {

std::string_view to_string(TrainingStage stage) {
  switch (stage) {
    case TrainingStage::frozen:
      return "frozen";
    case TrainingStage::gaze_only:
      return "gaze_only";
    case TrainingStage::perceiver_and_gaze:
      return "perceiver_and_gaze";
  }
  return "frozen";
}

TrainingStage training_stage_from_string(std::string_view name) {
  if (name == "frozen") return TrainingStage::frozen;
  if (name == "gaze_only") return TrainingStage::gaze_only;
  if (name == "perceiver_and_gaze") return TrainingStage::perceiver_and_gaze;
  throw ParameterError("unknown training stage '" + std::string(name) + "'");
}

std::size_t TrainableMask::trainable_count() const {
  return static_cast<std::size_t>(std::count(trainable.begin(), trainable.end(), true));
}

bool TrainableMask::is_trainable(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return trainable[i];
  throw ParameterError("trainable mask has no tensor '" + std::string(name) + "'");
}

bool TrainableMask::strict_subset_of(const TrainableMask& other) const {
  if (names != other.names) return false;
  bool extra = false;
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    if (trainable[i] && !other.trainable[i]) return false;
    if (!trainable[i] && other.trainable[i]) extra = true;
  }
  return extra;
}

TrainableMask trainable_mask(TrainingStage stage, const ResamplerConfig& config) {
  const auto layout = zeros_like(config);
  TrainableMask mask;
  mask.stage = stage;
  for (const auto& p : parameters(layout)) {
    mask.names.push_back(p.name);
    switch (stage) {
      case TrainingStage::frozen:
        mask.trainable.push_back(false);
        break;
      case TrainingStage::gaze_only:
        mask.trainable.push_back(p.group == ParamGroup::gaze);
        break;
      case TrainingStage::perceiver_and_gaze:
        mask.trainable.push_back(true);
        break;
    }
  }
  return mask;
}

namespace {

void require_target(const TrainingExample& ex, const ResamplerConfig& config) {
  if (ex.target.rows() != config.n_latents || ex.target.cols() != config.dim) {
    throw ShapeError("train_step: target " + ex.target.shape_string() + ", expected (" +
                     std::to_string(config.n_latents) + "x" + std::to_string(config.dim) + ")");
  }
}

}  // namespace

double regression_loss(const ResamplerWeights& weights, const ResamplerConfig& config,
                       std::span<const TrainingExample> batch) {
  if (batch.empty()) throw EmptyInputError("regression_loss: empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    require_target(ex, config);
    const Matrix out = resampler_forward(ex.media, ex.gaze, weights, config);
    double sq = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = out.values()[i] - ex.target.values()[i];
      sq += d * d;
    }
    total += sq / static_cast<double>(out.size());
  }
  return total / static_cast<double>(batch.size());
}

StepResult train_step(const ResamplerWeights& weights, const ResamplerConfig& config,
                      const TrainableMask& mask, std::span<const TrainingExample> batch,
                      double lr) {
  if (!(lr >= 0.0)) throw ParameterError("train_step: learning rate must be non-negative");
  if (batch.empty()) throw EmptyInputError("train_step: empty batch");
  check_shapes(weights, config);

  ResamplerWeights total_grad = zeros_like(config);
  const double batch_n = static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    require_target(ex, config);
    const Matrix out = resampler_forward(ex.media, ex.gaze, weights, config);
    const double n = static_cast<double>(out.size());
    Matrix upstream(out.rows(), out.cols());
    double sq = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = out.values()[i] - ex.target.values()[i];
      sq += d * d;
      upstream.values()[i] = 2.0 * d / (n * batch_n);
    }
    loss += sq / n / batch_n;
    const Gradients g = backward(ex.media, ex.gaze, weights, config, upstream);
    auto acc = parameters(total_grad);
    const auto part = parameters(g.params);
    for (std::size_t i = 0; i < acc.size(); ++i) *acc[i].tensor += *part[i].tensor;
  }

  StepResult result{weights, loss};
  auto params = parameters(result.weights);
  const auto grads = parameters(total_grad);
  if (mask.names.size() != params.size()) {
    throw ShapeError("train_step: mask covers " + std::to_string(mask.names.size()) +
                     " tensors, weights have " + std::to_string(params.size()));
  }
  if (lr == 0.0) return result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!mask.trainable[i]) continue;
    auto dst = params[i].tensor->values();
    const auto src = grads[i].tensor->values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= lr * src[j];
  }
  return result;
}

std::vector<TrainingExample> synthetic_batch(const ResamplerConfig& config, std::size_t size,
                                             std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto grid_side = static_cast<std::size_t>(std::lround(std::sqrt(config.n_media_tokens)));
  const auto patch_side = static_cast<std::size_t>(std::lround(std::sqrt(config.patch_dim)));
  const bool square_layout = grid_side * grid_side == config.n_media_tokens &&
                             patch_side * patch_side == config.patch_dim &&
                             grid_side * patch_side >= 8;

  // Teacher with wider weights so its output actually depends on the inputs.
  ResamplerWeights teacher = init_weights(config, seed ^ 0x7eac5e7ull);
  for (auto& p : parameters(teacher)) {
    if (p.name.ends_with("ln_gain") || p.name.ends_with("_bias")) continue;
    *p.tensor *= 15.0;
  }

  std::vector<TrainingExample> batch;
  batch.reserve(size);
  for (std::size_t b = 0; b < size; ++b) {
    TrainingExample ex;
    ex.media = Matrix(config.n_media_tokens, config.dim);
    for (auto& v : ex.media.values()) v = normal(rng);
    if (square_layout) {
      const std::size_t side = grid_side * patch_side;
      const auto track = gaze::synth_gaze(seed * 1000003ull + b, gaze::kDefaultFixations, 2);
      const auto map = gaze::points_to_heatmap(track, side, side, gaze::default_sigma(side, side));
      ex.gaze.heatmap_patches = gaze::heatmap_to_patches(map, grid_side, grid_side);
    } else {
      ex.gaze.heatmap_patches = Matrix(config.n_media_tokens, config.patch_dim);
      for (auto& v : ex.gaze.heatmap_patches.values()) v = unit(rng);
    }
    ex.target = resampler_forward(ex.media, ex.gaze, teacher, config);
    batch.push_back(std::move(ex));
  }
  return batch;
}

}  // namespace voila::perceiver
