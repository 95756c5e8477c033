#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voila/perceiver/resampler.hpp"

namespace voila::perceiver {

// Relative error between an analytic and a numeric derivative, with a floor
// on the denominator so near-zero gradients are judged on absolute error.
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t per_tensor = 0;
  std::uint64_t seed = 0;
  BackwardOptions backward;
};

struct GradCheckReport {
  std::size_t coordinates = 0;
  std::size_t tensors = 0;
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  bool passed = false;
};

// Central differences of <upstream, resampler_forward> against backward(),
// over parameter tensors and both inputs.
GradCheckReport gradient_check(const Matrix& media, const GazeInput& gaze,
                               const ResamplerWeights& weights, const ResamplerConfig& config,
                               const Matrix& upstream, const GradCheckOptions& options = {});

// Weights with non-trivial magnitudes everywhere (LN affines included) so a
// gradient check exercises every nonlinearity.
ResamplerWeights randomized_weights(const ResamplerConfig& config, std::uint64_t seed,
                                    double scale = 0.3);

struct GradCheckProblem {
  Matrix media;
  GazeInput gaze;
  Matrix upstream;
};

// Media, gaze patches and upstream gradient drawn from the seed.
GradCheckProblem random_problem(const ResamplerConfig& config, std::uint64_t seed);

// Zeroes every W_gaze_key in place.
void zero_gaze_key(ResamplerWeights& weights);

struct NeutralityReport {
  std::size_t trials = 0;
  std::size_t mismatches = 0;
  bool passed = false;
};

// With W_gaze_key = 0 everywhere, output for random gaze must be bit-equal to
// output for all-zero gaze.
NeutralityReport gaze_neutrality_check(const ResamplerConfig& config, std::uint64_t seed,
                                       std::size_t trials);

}  // namespace voila::perceiver
