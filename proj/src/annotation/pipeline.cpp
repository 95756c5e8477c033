#include "voila/annotation/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "voila/error.hpp"

namespace voila::annotation {

namespace {

struct WordRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<WordRange> word_ranges(std::string_view text) {
  std::vector<WordRange> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    const std::size_t b = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    words.push_back({b, i});
  }
  return words;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Splits on lines whose trimmed content is exactly "===".
std::vector<std::string> split_sections(std::string_view text) {
  std::vector<std::string> sections;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line) == "===") {
      sections.push_back(current);
      current.clear();
      continue;
    }
    current += line;
    current += '\n';
  }
  sections.push_back(current);
  return sections;
}

bool take_header(std::string_view section, std::string_view header, std::string& body) {
  const std::string s = trim(section);
  if (!s.starts_with(header)) return false;
  body = trim(std::string_view(s).substr(header.size()));
  return true;
}

std::size_t count_question_sections(std::string_view text) {
  std::size_t n = 0;
  std::string body;
  for (const auto& s : split_sections(text))
    if (take_header(s, "Question:", body)) ++n;
  return n;
}

bool has_empty_field(const QARecord& r) {
  return trim(r.fact).empty() || trim(r.direct_question).empty() ||
         trim(r.indirect_question).empty() || trim(r.answer).empty();
}

}  // namespace

void validate_narrative(const Narrative& n) {
  if (!n.word_times) return;
  const auto words = word_ranges(n.text);
  if (n.word_times->size() != words.size()) {
    throw FormatError("narrative " + n.image_id + ": " + std::to_string(n.word_times->size()) +
                      " word times for " + std::to_string(words.size()) + " words");
  }
  for (std::size_t i = 0; i < n.word_times->size(); ++i) {
    const auto& w = (*n.word_times)[i];
    if (w.end < w.start || (i > 0 && w.start < (*n.word_times)[i - 1].end)) {
      throw FormatError("narrative " + n.image_id + ": word times overlap or descend at word " +
                        std::to_string(i));
    }
  }
}

Narrative narrative_from_json(const nlohmann::json& j) {
  Narrative n;
  try {
    n.image_id = j.at("image_id").get<std::string>();
    n.text = j.at("text").get<std::string>();
    n.trace = gaze::track_from_json(j).track;
    if (j.contains("word_times") && !j["word_times"].is_null()) {
      std::vector<WordTime> times;
      for (const auto& w : j["word_times"]) times.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
      n.word_times = std::move(times);
    }
    if (j.contains("captions")) n.captions = j["captions"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("narrative record: ") + e.what());
  }
  validate_narrative(n);
  return n;
}

nlohmann::json narrative_to_json(const Narrative& n) {
  nlohmann::json j = gaze::track_to_json(n.trace);
  j["image_id"] = n.image_id;
  j["text"] = n.text;
  j["captions"] = n.captions;
  if (n.word_times) {
    nlohmann::json times = nlohmann::json::array();
    for (const auto& w : *n.word_times) times.push_back({w.start, w.end});
    j["word_times"] = std::move(times);
  }
  return j;
}

std::vector<Narrative> read_narratives_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open narratives file " + path);
  std::vector<Narrative> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(narrative_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AlignedSegment> align_segments(const Narrative& narrative,
                                           const std::vector<TaggedSpan>& spans) {
  const std::size_t len = narrative.text.size();
  const auto& points = narrative.trace.points;
  const std::vector<WordRange> words =
      narrative.word_times ? word_ranges(narrative.text) : std::vector<WordRange>{};
  if (narrative.word_times && words.size() != narrative.word_times->size()) {
    throw FormatError("align_segments: word times do not match the narrative's words");
  }

  std::vector<AlignedSegment> out;
  out.reserve(spans.size());
  for (const auto& span : spans) {
    if (span.char_start > span.char_end || span.char_end > len) {
      throw RangeError("align_segments: span <Q" + std::to_string(span.tag_number) + "> [" +
                       std::to_string(span.char_start) + ", " + std::to_string(span.char_end) +
                       ") lies outside a text of " + std::to_string(len) + " bytes");
    }
    AlignedSegment seg{span, {{}, narrative.trace.source}};
    if (narrative.word_times) {
      std::optional<std::size_t> first;
      std::size_t last = 0;
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (words[w].end > span.char_start && words[w].begin < span.char_end) {
          if (!first) first = w;
          last = w;
        }
      }
      if (first) {
        const double t0 = (*narrative.word_times)[*first].start;
        const double t1 = (*narrative.word_times)[last].end;
        for (const auto& p : points)
          if (p.t >= t0 && p.t <= t1) seg.segment.points.push_back(p);
      }
    } else {
      // index i belongs to [a, b) when start/len <= i/n < end/len
      const std::size_t n = points.size();
      for (std::size_t i = 0; i < n; ++i) {
        if (i * len >= span.char_start * n && i * len < span.char_end * n)
          seg.segment.points.push_back(points[i]);
      }
    }
    out.push_back(std::move(seg));
  }
  return out;
}

nlohmann::json record_to_json(const QARecord& r) {
  nlohmann::json j = {{"image_id", r.image_id},
                      {"tag_number", r.tag_number},
                      {"fact", r.fact},
                      {"trace", gaze::track_to_json(r.trace_segment)},
                      {"direct_question", r.direct_question},
                      {"indirect_question", r.indirect_question},
                      {"answer", r.answer}};
  j["reward"] = r.reward ? nlohmann::json(*r.reward) : nlohmann::json(nullptr);
  return j;
}

QARecord record_from_json(const nlohmann::json& j) {
  QARecord r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.tag_number = j.at("tag_number").get<int>();
    r.fact = j.at("fact").get<std::string>();
    r.trace_segment = gaze::track_from_json(j.at("trace")).track;
    r.direct_question = j.at("direct_question").get<std::string>();
    r.indirect_question = j.at("indirect_question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    if (j.contains("reward") && !j["reward"].is_null()) r.reward = j["reward"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("QA record: ") + e.what());
  }
  return r;
}

std::vector<QARecord> read_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file " + path);
  std::vector<QARecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_records_jsonl(const std::string& path, const std::vector<QARecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<std::string> default_keywords() {
  return {"prompt", "this picture", "reference caption", "the description", "the narrative"};
}

FilterResult keyword_filter(const std::vector<QARecord>& records,
                            const std::vector<std::string>& keywords) {
  std::vector<std::string> needles;
  for (const auto& k : keywords)
    if (!k.empty()) needles.push_back(lower(k));
  FilterResult out;
  for (const auto& r : records) {
    const std::string haystacks[] = {lower(r.direct_question), lower(r.indirect_question),
                                     lower(r.answer)};
    std::string hit;
    for (const auto& k : needles) {
      for (const auto& h : haystacks) {
        if (h.find(k) != std::string::npos) {
          hit = k;
          break;
        }
      }
      if (!hit.empty()) break;
    }
    if (hit.empty()) {
      out.kept.push_back(r);
    } else {
      out.removed.push_back({r, "keyword:" + hit});
    }
  }
  return out;
}

FilterResult reward_filter(const std::vector<QARecord>& records, Scorer& scorer, double tau) {
  FilterResult out;
  for (const auto& r : records) {
    QARecord scored = r;
    try {
      const double s = scorer.score(r.direct_question, r.answer);
      if (std::isnan(s)) {
        out.quarantined.push_back({r, "scorer_error: NaN score"});
        continue;
      }
      scored.reward = s;
    } catch (const std::exception& e) {
      out.quarantined.push_back({r, std::string("scorer_error: ") + e.what()});
      continue;
    }
    if (*scored.reward < tau) {
      out.removed.push_back({std::move(scored), "reward_below_tau"});
    } else {
      out.kept.push_back(std::move(scored));
    }
  }
  return out;
}

PipelineStats PipelineStats::from_counts(std::size_t raw, std::size_t kept) {
  if (kept > raw) throw ParameterError("PipelineStats: kept count exceeds raw count");
  PipelineStats s;
  s.raw_count = raw;
  s.kept_count = kept;
  s.survival_rate = raw == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(raw);
  return s;
}

ParsedGeneration parse_generation(std::string_view text) {
  const auto sections = split_sections(text);
  ParsedGeneration out;
  std::string body;
  if (sections.empty() || !take_header(sections.front(), "Refer:", body)) {
    throw ParseError("generation does not start with a Refer: section", 0);
  }
  out.refer = parse_markers(body);

  enum class Expect { question, indirect_or_answer, answer };
  Expect expect = Expect::question;
  QaBlock block;
  std::size_t block_start = 0;
  const auto fail = [&](std::size_t index, std::string reason) {
    out.malformed.push_back({index, std::move(reason)});
    block = {};
    expect = Expect::question;
  };

  for (std::size_t i = 1; i < sections.size(); ++i) {
    const std::string& s = sections[i];
    if (trim(s).empty()) continue;
    if (take_header(s, "Question:", body)) {
      if (expect != Expect::question) fail(block_start, "question without an answer");
      const QuestionTag tag = split_question_tag(body);
      block = {};
      block.tag_number = tag.tag_number;
      block.direct_question = tag.text;
      block_start = i;
      expect = Expect::indirect_or_answer;
    } else if (take_header(s, "Indirect Question:", body)) {
      if (expect != Expect::indirect_or_answer) {
        fail(i, "indirect question out of order");
        continue;
      }
      block.indirect_question = body;
      expect = Expect::answer;
    } else if (take_header(s, "Answer:", body)) {
      if (expect == Expect::question) {
        fail(i, "answer without a question");
        continue;
      }
      block.answer = body;
      out.blocks.push_back(std::move(block));
      block = {};
      expect = Expect::question;
    } else {
      if (expect != Expect::question) {
        fail(block_start, "unrecognized section inside a QA block");
      } else {
        fail(i, "unrecognized section");
      }
    }
  }
  if (expect != Expect::question) fail(block_start, "truncated QA block");
  return out;
}

DatasetBuild build_dataset(const std::vector<Narrative>& narratives,
                           const std::map<std::string, std::string>& generated,
                           const std::vector<std::string>& keywords, Scorer& scorer, double tau) {
  DatasetBuild build;
  std::size_t raw = 0;
  std::vector<QARecord> candidates;

  std::vector<const Narrative*> order;
  for (const auto& n : narratives) order.push_back(&n);
  std::stable_sort(order.begin(), order.end(),
                   [](const Narrative* a, const Narrative* b) { return a->image_id < b->image_id; });

  for (const Narrative* narrative : order) {
    const auto it = generated.find(narrative->image_id);
    if (it == generated.end()) continue;

    ParsedGeneration gen;
    try {
      gen = parse_generation(it->second);
    } catch (const ParseError& e) {
      const std::size_t blocks = std::max<std::size_t>(1, count_question_sections(it->second));
      raw += blocks;
      for (std::size_t b = 0; b < blocks; ++b)
        build.removals.push_back({narrative->image_id, 0, std::string("malformed: ") + e.what()});
      continue;
    }
    raw += gen.blocks.size() + gen.malformed.size();
    for (const auto& m : gen.malformed)
      build.removals.push_back({narrative->image_id, 0, "malformed: " + m.reason});

    // Offsets refer to the tag-free Refer text. Word times carry over only
    // when it has the narrative's word count.
    Narrative view = *narrative;
    view.text = gen.refer.clean_text;
    if (view.word_times && word_ranges(view.text).size() != view.word_times->size()) {
      view.word_times.reset();
    }
    const auto segments = align_segments(view, gen.refer.spans);

    for (const auto& qa : gen.blocks) {
      if (qa.tag_number == 0) {
        build.removals.push_back({narrative->image_id, 0, "ungrounded"});
        continue;
      }
      const auto seg = std::find_if(segments.begin(), segments.end(), [&](const AlignedSegment& s) {
        return s.span.tag_number == qa.tag_number;
      });
      if (seg == segments.end()) {
        build.removals.push_back({narrative->image_id, qa.tag_number, "unknown_tag"});
        continue;
      }
      QARecord r;
      r.image_id = narrative->image_id;
      r.tag_number = qa.tag_number;
      r.fact = seg->span.text;
      r.trace_segment = seg->segment;
      r.direct_question = qa.direct_question;
      r.indirect_question = qa.indirect_question;
      r.answer = qa.answer;
      if (has_empty_field(r)) {
        build.removals.push_back({r.image_id, r.tag_number, "malformed: empty field"});
        continue;
      }
      candidates.push_back(std::move(r));
    }
  }

  const FilterResult by_keyword = keyword_filter(candidates, keywords);
  for (const auto& r : by_keyword.removed)
    build.removals.push_back({r.record.image_id, r.record.tag_number, r.reason});
  FilterResult by_reward = reward_filter(by_keyword.kept, scorer, tau);
  for (const auto& r : by_reward.removed)
    build.removals.push_back({r.record.image_id, r.record.tag_number, r.reason});
  for (const auto& r : by_reward.quarantined)
    build.quarantined.push_back({r.record.image_id, r.record.tag_number, r.reason});

  build.records = std::move(by_reward.kept);
  std::stable_sort(build.records.begin(), build.records.end(),
                   [](const QARecord& a, const QARecord& b) {
                     return std::tie(a.image_id, a.tag_number) < std::tie(b.image_id, b.tag_number);
                   });
  build.stats = PipelineStats::from_counts(raw, build.records.size());
  return build;
}

nlohmann::json stats_to_json(const DatasetBuild& build) {
  nlohmann::json removals = nlohmann::json::array();
  for (const auto& r : build.removals)
    removals.push_back({{"image_id", r.image_id}, {"tag_number", r.tag_number}, {"reason", r.reason}});
  nlohmann::json quarantined = nlohmann::json::array();
  for (const auto& r : build.quarantined)
    quarantined.push_back({{"image_id", r.image_id}, {"tag_number", r.tag_number}, {"reason", r.reason}});
  return {{"raw_count", build.stats.raw_count},
          {"kept_count", build.stats.kept_count},
          {"survival_rate", build.stats.survival_rate},
          {"removals", std::move(removals)},
          {"quarantined", std::move(quarantined)}};
}

}  // namespace voila::annotation
