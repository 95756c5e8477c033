#pragma once

#include <vector>

#include "voila/numeric.hpp"
#include "voila/perceiver/config.hpp"
#include "voila/perceiver/weights.hpp"

namespace voila::perceiver {

// Heatmap patches, one row per media token (n_media_tokens x patch_dim).
struct GazeInput {
  Matrix heatmap_patches;
};

// G = LN(G' * W + b).
Matrix encode_gaze(const GazeInput& gaze, const ResamplerWeights& weights);

struct AttentionResult {
  Matrix output;                // n_latents x dim
  std::vector<Matrix> weights;  // per head, n_latents x (n_media + n_latents)
};

// Q from the latents; keys and values over the token-axis stack (x ++ L);
// keys receive the gaze bias (G ++ 0) * W_gaze_key. Heads split the feature
// axis evenly.
AttentionResult attn_with_weights(const Matrix& x, const Matrix& latents, const Matrix& gaze,
                                  const BlockWeights& block, const ResamplerConfig& config);
Matrix attn(const Matrix& x, const Matrix& latents, const Matrix& gaze, const BlockWeights& block,
            const ResamplerConfig& config);

// LN -> linear -> GELU -> linear.
Matrix feed_forward(const Matrix& t, const BlockWeights& block);

Matrix block_forward(const Matrix& x, const Matrix& latents, const Matrix& gaze,
                     const BlockWeights& block, const ResamplerConfig& config);

// Encodes the gaze, threads the latent seed through every block and applies
// the final layer norm. Output is n_latents x dim for any media length.
Matrix resampler_forward(const Matrix& media, const GazeInput& gaze,
                         const ResamplerWeights& weights, const ResamplerConfig& config);

struct Gradients {
  ResamplerWeights params;
  Matrix d_media;          // same shape as the media features
  Matrix d_gaze_patches;   // same shape as GazeInput::heatmap_patches
};

struct BackwardOptions {
  // Test hook: drops the row-sum term of the softmax Jacobian so gradient
  // checks have a known-bad implementation to catch.
  bool inject_softmax_fault = false;
};

// Gradients of <upstream, resampler_forward(...)> with respect to every
// parameter and both inputs.
Gradients backward(const Matrix& media, const GazeInput& gaze, const ResamplerWeights& weights,
                   const ResamplerConfig& config, const Matrix& upstream,
                   const BackwardOptions& options = {});

}  // namespace voila::perceiver
