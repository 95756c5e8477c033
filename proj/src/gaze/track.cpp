#include "voila/gaze/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "voila/error.hpp"

namespace voila::gaze {

std::string_view to_string(TrackSource source) {
  switch (source) {
    case TrackSource::gaze:
      return "gaze";
    case TrackSource::trace:
      return "trace";
    case TrackSource::synthetic:
      return "synthetic";
  }
  return "trace";
}

TrackSource source_from_string(std::string_view name) {
  if (name == "gaze") return TrackSource::gaze;
  if (name == "trace") return TrackSource::trace;
  if (name == "synthetic") return TrackSource::synthetic;
  throw FormatError("unknown track source '" + std::string(name) + "'");
}

IngestedTrack ingest_points(std::vector<TrackPoint> raw, TrackSource source) {
  IngestedTrack out;
  out.track.source = source;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& p = raw[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.t)) {
      throw FormatError("track point " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && p.t < raw[i - 1].t) {
      throw FormatError("track timestamps decrease at point " + std::to_string(i));
    }
    const double cx = std::clamp(p.x, 0.0, 1.0);
    const double cy = std::clamp(p.y, 0.0, 1.0);
    if (cx != p.x || cy != p.y) ++out.clamped_points;
    p.x = cx;
    p.y = cy;
  }
  out.track.points = std::move(raw);
  return out;
}

IngestedTrack track_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("points") || !j["points"].is_array()) {
    throw FormatError("track record needs a \"points\" array");
  }
  const auto source = source_from_string(j.value("source", std::string("trace")));
  std::vector<TrackPoint> raw;
  raw.reserve(j["points"].size());
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 3) throw FormatError("track point must be [x, y, t]");
    raw.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  }
  return ingest_points(std::move(raw), source);
}

nlohmann::json track_to_json(const PointTrack& track) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : track.points) points.push_back({p.x, p.y, p.t});
  return {{"source", to_string(track.source)}, {"points", std::move(points)}};
}

std::vector<PointTrack> read_tracks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open track file " + path);
  std::vector<PointTrack> tracks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      tracks.push_back(track_from_json(nlohmann::json::parse(line)).track);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return tracks;
}

void write_tracks_jsonl(const std::string& path, const std::vector<PointTrack>& tracks) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write track file " + path);
  for (const auto& t : tracks) out << track_to_json(t).dump() << '\n';
}

PointTrack downsample_track(const PointTrack& track, std::size_t rate) {
  if (rate == 0) throw ParameterError("downsample_track: rate must be >= 1");
  PointTrack out;
  out.source = track.source;
  out.points.reserve((track.size() + rate - 1) / rate);
  for (std::size_t i = 0; i < track.size(); i += rate) out.points.push_back(track.points[i]);
  return out;
}

}  // namespace voila::gaze
