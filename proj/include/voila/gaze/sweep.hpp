#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "voila/gaze/heatmap.hpp"
#include "voila/gaze/track.hpp"

namespace voila::gaze {

struct SweepResult {
  std::vector<std::size_t> rates;
  std::vector<double> emd_values;
  std::size_t argmin_rate = 0;
};

struct SweepOptions {
  std::size_t grid = 64;  // square heatmap side
  double sigma = 0.0;     // <= 0 selects default_sigma(grid, grid)
  std::size_t jobs = 1;   // worker threads for per-track heatmaps
};

// For every rate: downsample each trace track, build the mean heatmaps of
// both populations, and score cumulative_emd(gaze_mean, trace_mean). Ties in
// the argmin go to the smaller rate.
SweepResult sampling_rate_sweep(std::span<const PointTrack> gaze_tracks,
                                std::span<const PointTrack> trace_tracks,
                                std::span<const std::size_t> rates, const SweepOptions& options);

// Heatmaps for every track, computed on up to `jobs` threads and returned in
// input order.
std::vector<Heatmap> tracks_to_heatmaps(std::span<const PointTrack> tracks, std::size_t height,
                                        std::size_t width, double sigma, std::size_t jobs);

// Synthetic stand-ins for recorded gaze and pointer traces. Both generators
// draw their anchors (object centres) from the same seeded stream, so equal
// seeds describe the same scene.
struct SynthParams {
  double cluster_jitter = 0.02;    // std of fixations around an anchor
  double circling_radius = 0.05;   // radius of pointer loops around an anchor
  double outlier_fraction = 0.1;   // trailing off-target gaze fixations
  double lead_in_fraction = 0.02;  // share of trace points before the first anchor
  double loops_per_anchor = 2.0;
};

constexpr std::size_t kDefaultTracePoints = 400;
constexpr std::size_t kDefaultFixations = 20;
constexpr std::size_t kDefaultObjects = 3;

std::vector<TrackPoint> synth_anchors(std::uint64_t seed, std::size_t n_objects);

PointTrack synth_trace(std::uint64_t seed, std::size_t n_points, std::size_t n_objects,
                       const SynthParams& params = {});
PointTrack synth_gaze(std::uint64_t seed, std::size_t n_fixations, std::size_t n_objects,
                      const SynthParams& params = {});

struct SynthPopulation {
  std::vector<PointTrack> gaze;
  std::vector<PointTrack> trace;
};

// `count` paired tracks; pair i shares anchors. Per-track seeds are derived
// from `seed` and i.
SynthPopulation synth_population(std::uint64_t seed, std::size_t count,
                                 std::size_t n_points = kDefaultTracePoints,
                                 std::size_t n_fixations = kDefaultFixations,
                                 std::size_t n_objects = kDefaultObjects,
                                 const SynthParams& params = {});

}  // namespace voila::gaze
