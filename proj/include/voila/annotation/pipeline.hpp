#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "voila/annotation/markers.hpp"
#include "voila/gaze/track.hpp"
#include "voila/scorer.hpp"

namespace voila::annotation {

struct WordTime {
  double start = 0.0;
  double end = 0.0;
};

// A localized narrative: caption text whose words are aligned with a pointer
// trace, plus background captions of the same image.
struct Narrative {
  std::string image_id;
  std::string text;
  std::optional<std::vector<WordTime>> word_times;  // one per whitespace word
  gaze::PointTrack trace;
  std::vector<std::string> captions;
};

// Checks word_times against the word count and ordering.
void validate_narrative(const Narrative& n);

// Track schema plus "image_id", "text", optional "word_times" [[s, e], ...]
// and optional "captions".
Narrative narrative_from_json(const nlohmann::json& j);
nlohmann::json narrative_to_json(const Narrative& n);
std::vector<Narrative> read_narratives_jsonl(const std::string& path);

struct AlignedSegment {
  TaggedSpan span;
  gaze::PointTrack segment;
};

// With word times: points whose t lies within [first word start, last word
// end] of the span. Without: the span covering [a, b) of the characters gets
// the points whose index fraction lies in [a, b).
std::vector<AlignedSegment> align_segments(const Narrative& narrative,
                                           const std::vector<TaggedSpan>& spans);

struct QARecord {
  std::string image_id;
  int tag_number = 0;
  std::string fact;
  gaze::PointTrack trace_segment;
  std::string direct_question;
  std::string indirect_question;
  std::string answer;
  std::optional<double> reward;

  bool operator==(const QARecord&) const = default;
};

nlohmann::json record_to_json(const QARecord& r);
QARecord record_from_json(const nlohmann::json& j);
std::vector<QARecord> read_records_jsonl(const std::string& path);
void write_records_jsonl(const std::string& path, const std::vector<QARecord>& records);

struct RemovedRecord {
  QARecord record;
  std::string reason;
};

struct FilterResult {
  std::vector<QARecord> kept;
  std::vector<RemovedRecord> removed;
  // Records the scorer failed on; never counted as kept or removed silently.
  std::vector<RemovedRecord> quarantined;
};

// The three keywords shown for the meta-description filter plus two
// extensions for the same failure mode.
std::vector<std::string> default_keywords();

// Removes a record when any keyword occurs, case-insensitively, in its direct
// question, indirect question or answer.
FilterResult keyword_filter(const std::vector<QARecord>& records,
                            const std::vector<std::string>& keywords);

// Scores (direct question, answer); removes records scoring below tau.
// Surviving and removed records carry their score.
FilterResult reward_filter(const std::vector<QARecord>& records, Scorer& scorer, double tau);

struct PipelineStats {
  std::size_t raw_count = 0;
  std::size_t kept_count = 0;
  double survival_rate = 1.0;  // kept / raw; 1 when raw is 0

  static PipelineStats from_counts(std::size_t raw, std::size_t kept);
};

// One Question / Indirect Question / Answer triple of a generation.
struct QaBlock {
  int tag_number = 0;  // 0 for an untagged question
  std::string direct_question;
  std::string indirect_question;
  std::string answer;
};

struct MalformedBlock {
  std::size_t index = 0;  // section index within the generation
  std::string reason;
};

struct ParsedGeneration {
  MarkedText refer;
  std::vector<QaBlock> blocks;
  std::vector<MalformedBlock> malformed;
};

// Sections separated by lines reading "===": a leading "Refer:" section with
// the tagged narrative, then "Question:", "Indirect Question:", "Answer:"
// sections in that order. Marker errors in the Refer section propagate as
// ParseError; out-of-order sections are reported as malformed blocks.
ParsedGeneration parse_generation(std::string_view text);

struct DatasetRemoval {
  std::string image_id;
  int tag_number = 0;
  std::string reason;
};

struct DatasetBuild {
  std::vector<QARecord> records;  // sorted by (image_id, tag_number)
  std::vector<DatasetRemoval> removals;
  std::vector<DatasetRemoval> quarantined;
  PipelineStats stats;
};

// parse -> align -> keyword filter -> reward filter. `generated` maps image
// ids to raw generator output; narratives without one are skipped.
DatasetBuild build_dataset(const std::vector<Narrative>& narratives,
                           const std::map<std::string, std::string>& generated,
                           const std::vector<std::string>& keywords, Scorer& scorer, double tau);

nlohmann::json stats_to_json(const DatasetBuild& build);

}  // namespace voila::annotation
