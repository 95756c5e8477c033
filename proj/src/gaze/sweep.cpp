#include "voila/gaze/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "voila/error.hpp"
#include "voila/parallel.hpp"

namespace voila::gaze {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kAnchorStream = 0xa7;
constexpr std::uint64_t kTraceStream = 0x7e;
constexpr std::uint64_t kGazeStream = 0x9a;

constexpr double kTraceRateHz = 60.0;
constexpr double kFixationSeconds = 0.25;

TrackPoint clamp_point(double x, double y, double t) {
  return {std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0), t};
}

void require_counts(std::size_t a, std::size_t b, const char* op) {
  if (a == 0 || b == 0) throw ParameterError(std::string(op) + ": counts must be >= 1");
}

}  // namespace

std::vector<Heatmap> tracks_to_heatmaps(std::span<const PointTrack> tracks, std::size_t height,
                                        std::size_t width, double sigma, std::size_t jobs) {
  std::vector<Heatmap> maps(tracks.size());
  parallel_for(tracks.size(), jobs,
               [&](std::size_t i) { maps[i] = points_to_heatmap(tracks[i], height, width, sigma); });
  return maps;
}

SweepResult sampling_rate_sweep(std::span<const PointTrack> gaze_tracks,
                                std::span<const PointTrack> trace_tracks,
                                std::span<const std::size_t> rates, const SweepOptions& options) {
  if (gaze_tracks.empty() || trace_tracks.empty()) {
    throw EmptyInputError("sampling_rate_sweep: both track populations must be non-empty");
  }
  if (rates.empty()) throw EmptyInputError("sampling_rate_sweep: no rates given");
  const std::size_t grid = options.grid;
  const double sigma = options.sigma > 0.0 ? options.sigma : default_sigma(grid, grid);

  const auto gaze_maps = tracks_to_heatmaps(gaze_tracks, grid, grid, sigma, options.jobs);
  const Heatmap gaze_mean = mean_heatmap(gaze_maps);

  SweepResult result;
  result.rates.assign(rates.begin(), rates.end());
  result.emd_values.reserve(rates.size());
  std::vector<PointTrack> downsampled(trace_tracks.size());
  for (const std::size_t rate : rates) {
    for (std::size_t i = 0; i < trace_tracks.size(); ++i)
      downsampled[i] = downsample_track(trace_tracks[i], rate);
    const auto trace_maps = tracks_to_heatmaps(downsampled, grid, grid, sigma, options.jobs);
    result.emd_values.push_back(cumulative_emd(gaze_mean, mean_heatmap(trace_maps)));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.rates.size(); ++i) {
    const double a = result.emd_values[i];
    const double b = result.emd_values[best];
    if (a < b || (a == b && result.rates[i] < result.rates[best])) best = i;
  }
  result.argmin_rate = result.rates[best];
  return result;
}

std::vector<TrackPoint> synth_anchors(std::uint64_t seed, std::size_t n_objects) {
  std::mt19937_64 rng(mix_seed(seed, kAnchorStream));
  std::uniform_real_distribution<double> pos(0.15, 0.85);
  std::vector<TrackPoint> anchors(n_objects);
  for (auto& a : anchors) {
    a.x = pos(rng);
    a.y = pos(rng);
  }
  return anchors;
}

PointTrack synth_trace(std::uint64_t seed, std::size_t n_points, std::size_t n_objects,
                       const SynthParams& params) {
  require_counts(n_points, n_objects, "synth_trace");
  const auto anchors = synth_anchors(seed, n_objects);
  std::mt19937_64 rng(mix_seed(seed, kTraceStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> wobble(0.0, 0.15);
  std::normal_distribution<double> jitter(0.0, 0.004);

  PointTrack track;
  track.source = TrackSource::trace;
  track.points.reserve(n_points);
  auto emit = [&](double x, double y) {
    const double t = static_cast<double>(track.points.size()) / kTraceRateHz;
    track.points.push_back(clamp_point(x + jitter(rng), y + jitter(rng), t));
  };

  // The pointer starts wherever it rested and sweeps in to the first object.
  const std::size_t lead = std::min(
      n_points, std::max<std::size_t>(1, static_cast<std::size_t>(
                                             std::lround(params.lead_in_fraction * n_points))));
  const double sx = unit(rng);
  const double sy = unit(rng);
  for (std::size_t i = 0; i < lead; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(lead);
    emit(sx + f * (anchors[0].x - sx), sy + f * (anchors[0].y - sy));
  }

  // Remaining points: loops around each anchor, the last fifth of each
  // anchor's share spent travelling to the next one.
  const std::size_t body = n_points - lead;
  for (std::size_t k = 0; k < n_objects; ++k) {
    const std::size_t begin = body * k / n_objects;
    const std::size_t end = body * (k + 1) / n_objects;
    const std::size_t share = end - begin;
    const bool last = k + 1 == n_objects;
    const std::size_t circling = last ? share : share - share / 5;
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double radius = params.circling_radius * (1.0 + wobble(rng));
    for (std::size_t j = 0; j < circling; ++j) {
      const double theta = phase + 2.0 * std::numbers::pi * params.loops_per_anchor *
                                       static_cast<double>(j) / static_cast<double>(circling);
      emit(anchors[k].x + radius * std::cos(theta), anchors[k].y + radius * std::sin(theta));
    }
    const std::size_t transit = share - circling;
    for (std::size_t j = 0; j < transit; ++j) {
      const double f = static_cast<double>(j + 1) / static_cast<double>(transit + 1);
      const auto& a = anchors[k];
      const auto& b = anchors[k + 1];
      emit(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y));
    }
  }
  return track;
}

PointTrack synth_gaze(std::uint64_t seed, std::size_t n_fixations, std::size_t n_objects,
                      const SynthParams& params) {
  require_counts(n_fixations, n_objects, "synth_gaze");
  const auto anchors = synth_anchors(seed, n_objects);
  std::mt19937_64 rng(mix_seed(seed, kGazeStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, params.cluster_jitter);

  const auto outliers = std::min(
      n_fixations, static_cast<std::size_t>(
                       std::lround(params.outlier_fraction * static_cast<double>(n_fixations))));
  const std::size_t on_target = n_fixations - outliers;

  PointTrack track;
  track.source = TrackSource::gaze;
  track.points.reserve(n_fixations);
  for (std::size_t i = 0; i < on_target; ++i) {
    const auto& a = anchors[i * n_objects / std::max<std::size_t>(1, on_target)];
    const double t = static_cast<double>(i) * kFixationSeconds;
    track.points.push_back(clamp_point(a.x + jitter(rng), a.y + jitter(rng), t));
  }
  // Off-target fixations once the query is over.
  for (std::size_t i = on_target; i < n_fixations; ++i) {
    const double t = static_cast<double>(i) * kFixationSeconds;
    const double x = unit(rng);
    const double y = unit(rng);
    track.points.push_back(clamp_point(x, y, t));
  }
  return track;
}

SynthPopulation synth_population(std::uint64_t seed, std::size_t count, std::size_t n_points,
                                 std::size_t n_fixations, std::size_t n_objects,
                                 const SynthParams& params) {
  SynthPopulation pop;
  pop.gaze.reserve(count);
  pop.trace.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t track_seed = mix_seed(seed, 0x1000 + i);
    pop.gaze.push_back(synth_gaze(track_seed, n_fixations, n_objects, params));
    pop.trace.push_back(synth_trace(track_seed, n_points, n_objects, params));
  }
  return pop;
}

}  // namespace voila::gaze
