#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "voila/numeric.hpp"
#include "voila/perceiver/config.hpp"

namespace voila::perceiver {

struct BlockWeights {
  Matrix w_q;         // dim x dim, latents -> queries
  Matrix w_k;         // dim x dim, (x ++ L) -> keys
  Matrix w_v;         // dim x dim, (x ++ L) -> values
  Matrix w_gaze_key;  // dim x dim, (G ++ 0) -> additive key bias; no bias term
  Matrix ff_ln_gain;  // 1 x dim
  Matrix ff_ln_bias;  // 1 x dim
  Matrix ff_w1;       // dim x ff_dim
  Matrix ff_b1;       // 1 x ff_dim
  Matrix ff_w2;       // ff_dim x dim
  Matrix ff_b2;       // 1 x dim
  Matrix out_ln_gain;  // 1 x dim
  Matrix out_ln_bias;  // 1 x dim

  bool operator==(const BlockWeights&) const = default;
};

// Every learnable tensor of the resampler. The same layout doubles as the
// gradient container.
struct ResamplerWeights {
  Matrix latents;       // n_latents x dim
  Matrix gaze_w;        // patch_dim x dim
  Matrix gaze_b;        // 1 x dim
  Matrix gaze_ln_gain;  // 1 x dim
  Matrix gaze_ln_bias;  // 1 x dim
  std::vector<BlockWeights> blocks;
  Matrix final_ln_gain;  // 1 x dim
  Matrix final_ln_bias;  // 1 x dim

  bool operator==(const ResamplerWeights&) const = default;
};

enum class ParamGroup { gaze, perceiver };

struct ParamRef {
  std::string name;
  Matrix* tensor;
  ParamGroup group;
};

struct ConstParamRef {
  std::string name;
  const Matrix* tensor;
  ParamGroup group;
};

// Stable traversal order: latents, gaze encoder, blocks in order, final LN.
// Names look like "latents", "gaze.w", "blocks.1.w_gaze_key".
std::vector<ParamRef> parameters(ResamplerWeights& w);
std::vector<ConstParamRef> parameters(const ResamplerWeights& w);

std::size_t parameter_count(const ResamplerWeights& w);

// Zero tensors with the layout implied by the config.
ResamplerWeights zeros_like(const ResamplerConfig& config);

// Kaiming-normal (fan-in, ReLU gain) draws rescaled to std 0.02; LN gains 1,
// LN and linear biases 0. Deterministic in `seed`.
ResamplerWeights init_weights(const ResamplerConfig& config, std::uint64_t seed);

// One Kaiming-normal matrix, fan-in = rows, rescaled to `target_std`.
Matrix kaiming_normal(std::size_t fan_in, std::size_t fan_out, double target_std,
                      std::uint64_t seed);

constexpr double kInitStd = 0.02;

// Throws ShapeError if any tensor disagrees with the config.
void check_shapes(const ResamplerWeights& w, const ResamplerConfig& config);

}  // namespace voila::perceiver
