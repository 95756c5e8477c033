#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voila/perceiver/resampler.hpp"

namespace voila::perceiver {

enum class TrainingStage { frozen, gaze_only, perceiver_and_gaze };

std::string_view to_string(TrainingStage stage);
TrainingStage training_stage_from_string(std::string_view name);

// One flag per tensor, in parameters() order.
struct TrainableMask {
  TrainingStage stage = TrainingStage::frozen;
  std::vector<std::string> names;
  std::vector<bool> trainable;

  std::size_t trainable_count() const;
  bool is_trainable(std::string_view name) const;
  // Every tensor trainable here is trainable in `other`, and `other` has at
  // least one more.
  bool strict_subset_of(const TrainableMask& other) const;
};

// frozen: nothing; gaze_only: the gaze encoder and every W_gaze_key;
// perceiver_and_gaze: every resampler tensor.
TrainableMask trainable_mask(TrainingStage stage, const ResamplerConfig& config);

struct TrainingExample {
  Matrix media;
  GazeInput gaze;
  Matrix target;  // n_latents x dim
};

struct StepResult {
  ResamplerWeights weights;
  double loss = 0.0;  // before the update
};

// Mean squared error, averaged over elements then over the batch.
double regression_loss(const ResamplerWeights& weights, const ResamplerConfig& config,
                       std::span<const TrainingExample> batch);

// One plain gradient-descent step on the regression loss. Tensors outside
// the mask are copied through untouched.
StepResult train_step(const ResamplerWeights& weights, const ResamplerConfig& config,
                      const TrainableMask& mask, std::span<const TrainingExample> batch,
                      double lr);

// Fixed regression batch: media and gaze drawn from the seed, targets from a
// differently seeded teacher resampler so the task is realizable.
std::vector<TrainingExample> synthetic_batch(const ResamplerConfig& config, std::size_t size,
                                             std::uint64_t seed);

}  // namespace voila::perceiver
