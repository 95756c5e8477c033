#include "voila/perceiver/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace voila::perceiver {

namespace {

double objective(const Matrix& media, const GazeInput& gaze, const ResamplerWeights& weights,
                 const ResamplerConfig& config, const Matrix& upstream) {
  const Matrix out = resampler_forward(media, gaze, weights, config);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * upstream.values()[i];
  return s;
}

std::vector<std::size_t> pick_coordinates(std::size_t n, std::size_t per_tensor,
                                          std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (per_tensor == 0 || per_tensor >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(per_tensor);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(const Matrix& media, const GazeInput& gaze,
                               const ResamplerWeights& weights, const ResamplerConfig& config,
                               const Matrix& upstream, const GradCheckOptions& options) {
  const Gradients analytic = backward(media, gaze, weights, config, upstream, options.backward);
  std::mt19937_64 rng(options.seed);
  GradCheckReport report;

  const auto record = [&](const std::string& name, std::size_t index, double a, double n) {
    const double err = relative_error(a, n);
    if (report.coordinates++ == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_tensor = name;
      report.worst_index = index;
    }
  };

  ResamplerWeights probe = weights;
  auto probe_params = parameters(probe);
  const auto grad_params = parameters(analytic.params);
  for (std::size_t t = 0; t < probe_params.size(); ++t) {
    auto values = probe_params[t].tensor->values();
    for (std::size_t i : pick_coordinates(values.size(), options.per_tensor, rng)) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = objective(media, gaze, probe, config, upstream);
      values[i] = saved - options.step;
      const double down = objective(media, gaze, probe, config, upstream);
      values[i] = saved;
      record(probe_params[t].name, i, grad_params[t].tensor->values()[i],
             (up - down) / (2.0 * options.step));
    }
    ++report.tensors;
  }

  Matrix media_probe = media;
  for (std::size_t i : pick_coordinates(media.size(), options.per_tensor, rng)) {
    const double saved = media_probe.values()[i];
    media_probe.values()[i] = saved + options.step;
    const double up = objective(media_probe, gaze, weights, config, upstream);
    media_probe.values()[i] = saved - options.step;
    const double down = objective(media_probe, gaze, weights, config, upstream);
    media_probe.values()[i] = saved;
    record("input.media", i, analytic.d_media.values()[i], (up - down) / (2.0 * options.step));
  }
  ++report.tensors;

  GazeInput gaze_probe = gaze;
  auto& patches = gaze_probe.heatmap_patches;
  for (std::size_t i : pick_coordinates(patches.size(), options.per_tensor, rng)) {
    const double saved = patches.values()[i];
    patches.values()[i] = saved + options.step;
    const double up = objective(media, gaze_probe, weights, config, upstream);
    patches.values()[i] = saved - options.step;
    const double down = objective(media, gaze_probe, weights, config, upstream);
    patches.values()[i] = saved;
    record("input.gaze", i, analytic.d_gaze_patches.values()[i],
           (up - down) / (2.0 * options.step));
  }
  ++report.tensors;

  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

ResamplerWeights randomized_weights(const ResamplerConfig& config, std::uint64_t seed,
                                    double scale) {
  ResamplerWeights w = zeros_like(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& p : parameters(w)) {
    const bool gain = p.name.ends_with("ln_gain");
    for (auto& v : p.tensor->values()) v = (gain ? 1.0 : 0.0) + scale * normal(rng);
  }
  return w;
}

GradCheckProblem random_problem(const ResamplerConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GradCheckProblem p;
  p.media = Matrix(config.n_media_tokens, config.dim);
  for (auto& v : p.media.values()) v = normal(rng);
  p.gaze.heatmap_patches = Matrix(config.n_media_tokens, config.patch_dim);
  for (auto& v : p.gaze.heatmap_patches.values()) v = unit(rng);
  p.upstream = Matrix(config.n_latents, config.dim);
  for (auto& v : p.upstream.values()) v = normal(rng);
  return p;
}

void zero_gaze_key(ResamplerWeights& weights) {
  for (auto& b : weights.blocks) b.w_gaze_key = Matrix(b.w_gaze_key.rows(), b.w_gaze_key.cols());
}

NeutralityReport gaze_neutrality_check(const ResamplerConfig& config, std::uint64_t seed,
                                       std::size_t trials) {
  NeutralityReport report;
  for (std::size_t t = 0; t < trials; ++t) {
    ResamplerWeights w = randomized_weights(config, seed * 7919 + t);
    zero_gaze_key(w);
    const GradCheckProblem p = random_problem(config, seed * 104729 + t);
    GazeInput zero{Matrix(config.n_media_tokens, config.patch_dim)};
    const Matrix with_gaze = resampler_forward(p.media, p.gaze, w, config);
    const Matrix without = resampler_forward(p.media, zero, w, config);
    ++report.trials;
    if (!(with_gaze == without)) ++report.mismatches;
  }
  report.passed = report.trials > 0 && report.mismatches == 0;
  return report;
}

}  // namespace voila::perceiver
