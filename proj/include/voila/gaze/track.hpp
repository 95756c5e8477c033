#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace voila::gaze {

enum class TrackSource { gaze, trace, synthetic };

std::string_view to_string(TrackSource source);
TrackSource source_from_string(std::string_view name);

struct TrackPoint {
  double x = 0.0;  // normalized [0, 1], left to right
  double y = 0.0;  // normalized [0, 1], top to bottom
  double t = 0.0;  // seconds

  bool operator==(const TrackPoint&) const = default;
};

// Ordered gaze fixations or pointer trace samples.
struct PointTrack {
  std::vector<TrackPoint> points;
  TrackSource source = TrackSource::trace;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  bool operator==(const PointTrack&) const = default;
};

// Result of validating raw input: coordinates outside the unit square are
// clamped and counted, decreasing timestamps are rejected.
struct IngestedTrack {
  PointTrack track;
  std::size_t clamped_points = 0;
};

IngestedTrack ingest_points(std::vector<TrackPoint> raw, TrackSource source);

// {"source": "gaze"|"trace", "points": [[x, y, t], ...]}
IngestedTrack track_from_json(const nlohmann::json& j);
nlohmann::json track_to_json(const PointTrack& track);

std::vector<PointTrack> read_tracks_jsonl(const std::string& path);
void write_tracks_jsonl(const std::string& path, const std::vector<PointTrack>& tracks);

// Keeps indices 0, rate, 2 * rate, ...
PointTrack downsample_track(const PointTrack& track, std::size_t rate);

}  // namespace voila::gaze
