#include <doctest.h>

#include <atomic>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <thread>

#include <httplib.h>

#include "voila/annotation/generator.hpp"
#include "voila/annotation/markers.hpp"
#include "voila/annotation/pipeline.hpp"
#include "voila/error.hpp"
#include "voila/io/binary.hpp"

using namespace voila;
using namespace voila::annotation;

namespace {

std::string read_all(const std::string& path) {
  const auto b = io::read_file(path);
  return {b.begin(), b.end()};
}

gaze::PointTrack ramp(std::size_t n, double dt = 0.1) {
  gaze::PointTrack t;
  for (std::size_t i = 0; i < n; ++i) t.points.push_back({0.01 * i, 0.5, dt * i});
  return t;
}

QARecord record(std::string id, std::string q, std::string a, std::string iq = "What is it?") {
  QARecord r;
  r.image_id = std::move(id);
  r.tag_number = 1;
  r.fact = "fact";
  r.direct_question = std::move(q);
  r.indirect_question = std::move(iq);
  r.answer = std::move(a);
  return r;
}

class MapScorer final : public Scorer {
 public:
  explicit MapScorer(std::map<std::string, double> by_answer) : by_answer_(std::move(by_answer)) {}
  double score(std::string_view, std::string_view answer) override {
    const auto it = by_answer_.find(std::string(answer));
    if (it == by_answer_.end()) throw BackendError("no score", std::string(answer));
    return it->second;
  }

 private:
  std::map<std::string, double> by_answer_;
};

std::vector<std::string> ids(const std::vector<QARecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.image_id);
  return out;
}

// Loopback server that replies with the queued statuses, then 200.
struct LoopbackServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};
  std::vector<int> statuses;
  std::string last_body;

  explicit LoopbackServer(std::vector<int> queued, std::string reply)
      : statuses(std::move(queued)) {
    server.Post("/v1", [this, reply](const httplib::Request& req, httplib::Response& res) {
      const int n = calls++;
      last_body = req.body;
      if (n < static_cast<int>(statuses.size())) {
        res.status = statuses[n];
        res.set_content("busy", "text/plain");
        return;
      }
      res.set_content(reply, "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LoopbackServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

}  // namespace

TEST_SUITE("markers") {
  TEST_CASE("fire hydrant span") {
    const auto m = parse_markers("<Q1>A red fire hydrant</Q1> is deep in the snow");
    CHECK(m.clean_text == "A red fire hydrant is deep in the snow");
    REQUIRE(m.spans.size() == 1);
    CHECK(m.spans[0].tag_number == 1);
    CHECK(m.spans[0].text == "A red fire hydrant");
    CHECK(m.spans[0].char_start == 0);
    CHECK(m.spans[0].char_end == 18);
  }

  TEST_CASE("untagged text passes through") {
    const auto m = parse_markers("a < b and c > d, <Qx> too");
    CHECK(m.clean_text == "a < b and c > d, <Qx> too");
    CHECK(m.spans.empty());
  }

  TEST_CASE("malformed tags raise parse errors with offsets") {
    CHECK_THROWS_AS(parse_markers("<Q1>a</Q2>"), ParseError);
    CHECK_THROWS_AS(parse_markers("<Q1>a"), ParseError);
    CHECK_THROWS_AS(parse_markers("a</Q1>"), ParseError);
    CHECK_THROWS_AS(parse_markers("<Q1>a<Q2>b</Q2></Q1>"), ParseError);
    CHECK_THROWS_AS(parse_markers("<Q1>a<Q2>b</Q1></Q2>"), ParseError);
    CHECK_THROWS_AS(parse_markers("<Q1>a</Q1><Q1>b</Q1>"), ParseError);
    CHECK_THROWS_AS(parse_markers("<Q>a</Q>"), ParseError);
    CHECK_THROWS_AS(parse_markers("<Q0>a</Q0>"), ParseError);
    try {
      parse_markers("abc<Q1>d</Q3>");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.position() == 8);
    }
  }

  TEST_CASE("render then parse round-trips random spans") {
    std::mt19937_64 rng(5);
    const std::string alphabet = "abc de<f>g ";
    for (int trial = 0; trial < 200; ++trial) {
      std::string text;
      const std::size_t len = rng() % 40;
      for (std::size_t i = 0; i < len; ++i) text.push_back(alphabet[rng() % alphabet.size()]);
      // '<' followed by Q never appears in the alphabet, so the text is tag-free
      std::vector<TaggedSpan> spans;
      std::size_t cursor = 0;
      int tag = 1;
      while (cursor < text.size() && rng() % 3 != 0) {
        const std::size_t start = cursor + rng() % (text.size() - cursor + 1);
        const std::size_t end = start + rng() % (text.size() - start + 1);
        spans.push_back({tag++, start, end, text.substr(start, end - start)});
        cursor = end;
        if (end == text.size()) break;
      }
      const auto parsed = parse_markers(render_markers(text, spans));
      CHECK(parsed.clean_text == text);
      CHECK(parsed.spans == spans);
    }
  }

  TEST_CASE("question tags") {
    CHECK(split_question_tag("<Q3>What is it?").tag_number == 3);
    CHECK(split_question_tag("  <Q3> What is it?").text == "What is it?");
    CHECK(split_question_tag("<Q>What?").tag_number == 0);
    CHECK(split_question_tag("What?").tag_number == 0);
  }
}

TEST_SUITE("alignment") {
  TEST_CASE("a whole-text span gets the entire trace") {
    Narrative n{"a", "one two three", std::nullopt, ramp(7), {}};
    const auto segs = align_segments(n, {{1, 0, n.text.size(), n.text}});
    CHECK(segs[0].segment.points == n.trace.points);
  }

  TEST_CASE("halves split a ten-point trace five and five") {
    Narrative n{"a", "abcdefghij", std::nullopt, ramp(10), {}};
    const auto segs = align_segments(n, {{1, 0, 5, "abcde"}, {2, 5, 10, "fghij"}});
    CHECK(segs[0].segment.size() == 5);
    CHECK(segs[1].segment.size() == 5);
    CHECK(segs[1].segment.points.front() == n.trace.points[5]);
  }

  TEST_CASE("word times select exactly the points inside the span's words") {
    // words: w0 w1 w2 w3 w4 w5 w6 with intervals [i, i + 0.8]
    Narrative n;
    n.text = "w0 w1 w2 w3 w4 w5 w6";
    std::vector<WordTime> times;
    for (int i = 0; i < 7; ++i) times.push_back({double(i), i + 0.8});
    n.word_times = times;
    n.trace = ramp(80, 0.1);  // t = 0.0 .. 7.9
    // span over words 3-5 by character range
    const std::size_t start = n.text.find("w3"), end = n.text.find("w5") + 2;
    const auto segs = align_segments(n, {{1, start, end, n.text.substr(start, end - start)}});
    std::vector<std::size_t> got;
    for (const auto& p : segs[0].segment.points) got.push_back(static_cast<std::size_t>(std::lround(p.t * 10)));
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < 80; ++i) {
      const double t = 0.1 * i;
      if (t >= 3.0 && t <= 5.8) want.push_back(i);
    }
    CHECK(got == want);
  }

  TEST_CASE("out-of-range spans raise range errors") {
    Narrative n{"a", "short", std::nullopt, ramp(4), {}};
    CHECK_THROWS_AS(align_segments(n, {{1, 2, 9, "x"}}), RangeError);
  }

  TEST_CASE("proportional segments partition the trace") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t len = 1 + rng() % 60, points = rng() % 50;
      Narrative n{"a", std::string(len, 'x'), std::nullopt, ramp(points), {}};
      std::vector<std::size_t> cuts{0, len};
      for (int k = 0; k < 3; ++k) cuts.push_back(rng() % (len + 1));
      std::sort(cuts.begin(), cuts.end());
      std::vector<TaggedSpan> spans;
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        spans.push_back({int(i + 1), cuts[i], cuts[i + 1], ""});
      std::vector<gaze::TrackPoint> joined;
      for (const auto& s : align_segments(n, spans))
        joined.insert(joined.end(), s.segment.points.begin(), s.segment.points.end());
      CHECK(joined == n.trace.points);
    }
  }

  TEST_CASE("narrative validation") {
    Narrative n{"a", "two words", std::vector<WordTime>{{0, 1}}, ramp(2), {}};
    CHECK_THROWS_AS(validate_narrative(n), FormatError);
    n.word_times = std::vector<WordTime>{{0, 1}, {0.5, 2}};
    CHECK_THROWS_AS(validate_narrative(n), FormatError);
    n.word_times = std::vector<WordTime>{{0, 1}, {1, 2}};
    CHECK_NOTHROW(validate_narrative(n));
    const auto back = narrative_from_json(narrative_to_json(n));
    CHECK(back.text == n.text);
    CHECK(back.word_times->size() == 2);
  }
}

TEST_SUITE("filters") {
  TEST_CASE("keyword filter examples") {
    const auto r = keyword_filter({record("1", "What is it?", "As mentioned in the reference caption, it is red."),
                                   record("2", "What is it?", "The hydrant is red."),
                                   record("3", "What is THIS PICTURE about?", "Snow.")},
                                  default_keywords());
    CHECK(ids(r.kept) == std::vector<std::string>{"2"});
    REQUIRE(r.removed.size() == 2);
    CHECK(r.removed[0].reason == "keyword:reference caption");
    CHECK(r.removed[1].reason == "keyword:this picture");
  }

  TEST_CASE("reward filter examples") {
    WordCountScorer words;
    const std::vector<QARecord> rs{record("a", "q", "Yes."), record("b", "q", "It is a red hydrant.")};
    const auto all = reward_filter(rs, words, -std::numeric_limits<double>::infinity());
    CHECK(all.kept.size() == 2);
    const auto r = reward_filter(rs, words, 3);
    CHECK(ids(r.kept) == std::vector<std::string>{"b"});
    CHECK(r.kept[0].reward == 5.0);
    CHECK(r.removed[0].record.reward == 1.0);
    CHECK(r.removed[0].reason == "reward_below_tau");

    MapScorer table({{"x", -2.44}, {"y", -1.26}, {"z", 0.14}});
    const auto t = reward_filter({record("x", "q", "x"), record("y", "q", "y"), record("z", "q", "z")}, table, -1.5);
    CHECK(ids(t.kept) == std::vector<std::string>{"y", "z"});
    CHECK(ids(t.removed.empty() ? std::vector<QARecord>{} : std::vector<QARecord>{t.removed[0].record}) ==
          std::vector<std::string>{"x"});
  }

  TEST_CASE("scorer failures are quarantined") {
    MapScorer table({{"known", 1.0}});
    const auto r = reward_filter({record("a", "q", "known"), record("b", "q", "unknown")}, table, 0.0);
    CHECK(r.kept.size() == 1);
    CHECK(r.removed.empty());
    REQUIRE(r.quarantined.size() == 1);
    CHECK(r.quarantined[0].record.image_id == "b");
  }

  TEST_CASE("golden twelve-record fixture") {
    std::vector<QARecord> rs = read_records_jsonl(VOILA_FIXTURE_DIR "/filter_golden.jsonl");
    const auto expect = nlohmann::json::parse(read_all(VOILA_FIXTURE_DIR "/filter_expected.json"));
    REQUIRE(rs.size() == 12);
    const auto k = keyword_filter(rs, default_keywords());
    std::map<std::string, std::string> removed;
    for (const auto& r : k.removed) removed[r.record.image_id] = r.reason;
    CHECK(removed == expect["keyword_removed"].get<std::map<std::string, std::string>>());
    WordCountScorer words;
    const auto r = reward_filter(k.kept, words, expect["tau"].get<double>());
    std::vector<std::string> low;
    for (const auto& x : r.removed) low.push_back(x.record.image_id);
    CHECK(low == expect["reward_removed"].get<std::vector<std::string>>());
    CHECK(ids(r.kept) == expect["kept"].get<std::vector<std::string>>());
  }

  TEST_CASE("filters partition their input and are idempotent") {
    std::vector<QARecord> rs = read_records_jsonl(VOILA_FIXTURE_DIR "/filter_golden.jsonl");
    WordCountScorer words;
    const auto k = keyword_filter(rs, default_keywords());
    CHECK(k.kept.size() + k.removed.size() == rs.size());
    CHECK(keyword_filter(k.kept, default_keywords()).kept == k.kept);
    const auto r = reward_filter(rs, words, 5);
    CHECK(r.kept.size() + r.removed.size() == rs.size());
    CHECK(reward_filter(r.kept, words, 5).kept == r.kept);
  }

  TEST_CASE("survival is monotone in tau and in the keyword set") {
    std::vector<QARecord> rs = read_records_jsonl(VOILA_FIXTURE_DIR "/filter_golden.jsonl");
    WordCountScorer words;
    std::size_t prev = rs.size();
    for (double tau = 0; tau <= 10; tau += 0.5) {
      const auto n = reward_filter(rs, words, tau).kept.size();
      CHECK(n <= prev);
      prev = n;
    }
    auto kws = default_keywords();
    prev = rs.size() + 1;
    for (std::size_t n = 0; n <= kws.size(); ++n) {
      const std::vector<std::string> subset(kws.begin(), kws.begin() + n);
      const auto kept = keyword_filter(rs, subset).kept.size();
      CHECK(kept <= prev);
      prev = kept;
    }
  }

  TEST_CASE("survival-rate arithmetic") {
    CHECK(PipelineStats::from_counts(1000, 935).survival_rate == doctest::Approx(0.935));
    const auto empty = PipelineStats::from_counts(0, 0);
    CHECK(empty.survival_rate == 1.0);
    CHECK_THROWS_AS(PipelineStats::from_counts(3, 4), ParameterError);
  }
}

TEST_SUITE("generation") {
  TEST_CASE("appendix exchange parses into four tagged blocks") {
    const auto g = parse_generation(read_all(VOILA_DATA_DIR "/prompts/example_assistant.txt"));
    REQUIRE(g.blocks.size() == 4);
    CHECK(g.malformed.empty());
    for (int i = 0; i < 4; ++i) CHECK(g.blocks[i].tag_number == i + 1);
    REQUIRE(g.refer.spans.size() == 4);
    CHECK(g.refer.spans[0].text == "A red fire hydrant");
    CHECK(g.refer.spans[1].text == "deep in the snow");
    CHECK(g.blocks[0].indirect_question == "What is it?");
    CHECK(g.blocks[3].direct_question.rfind("What does this scene suggests", 0) == 0);
  }

  TEST_CASE("out-of-order sections are malformed, not fatal") {
    const std::string text =
        "Refer:<Q1>a</Q1> b\n===\nAnswer:\norphan\n===\nQuestion:\n<Q1>q?\n===\nIndirect Question:\niq?\n"
        "===\nAnswer:\nans\n===\nQuestion:\n<Q2>dangling?\n";
    const auto g = parse_generation(text);
    CHECK(g.blocks.size() == 1);
    CHECK(g.malformed.size() == 2);
    CHECK_THROWS_AS(parse_generation("Question:\nq\n"), ParseError);
    CHECK_THROWS_AS(parse_generation("Refer:<Q1>a</Q2>\n===\n"), ParseError);
  }

  TEST_CASE("build_dataset walks parse, align and both filters") {
    Narrative n{"img", "A red hydrant. It is buried. Snow falls. A dog runs. A bus waits.", std::nullopt,
                ramp(20), {"A street in winter."}};
    const std::string gen =
        "Refer:<Q1>A red hydrant.</Q1> <Q2>It is buried.</Q2> <Q3>Snow falls.</Q3> <Q4>A dog runs.</Q4> "
        "<Q5>A bus waits.</Q5>\n===\n"
        "Question:\n<Q1>What color is the hydrant?\n===\nIndirect Question:\nWhat color?\n===\nAnswer:\nIt is bright red.\n===\n"
        "Question:\n<Q2>Is it buried?\n===\nIndirect Question:\nIs it?\n===\nAnswer:\nYes.\n===\n"
        "Question:\n<Q3>Is it snowing?\n===\nIndirect Question:\nIs it falling?\n===\nAnswer:\nSnow is falling steadily now.\n===\n"
        "Question:\n<Q4>What runs?\n===\nIndirect Question:\nWhat is that?\n===\nAnswer:\nThe reference caption says a dog.\n===\n"
        "Question:\n<Q5>What waits?\n===\nIndirect Question:\nWhat is that?\n===\nAnswer:\nA city bus waits there.\n";
    WordCountScorer words;
    const auto b = build_dataset({n}, {{"img", gen}}, default_keywords(), words, 3);
    CHECK(b.stats.raw_count == 5);
    CHECK(b.stats.kept_count == 3);
    REQUIRE(b.records.size() == 3);
    CHECK(b.records[0].tag_number == 1);
    CHECK(b.records[1].tag_number == 3);
    CHECK(b.records[2].tag_number == 5);
    CHECK(b.records[0].fact == "A red hydrant.");
    REQUIRE(b.removals.size() == 2);
    CHECK(b.removals[0].tag_number == 4);
    CHECK(b.removals[0].reason == "keyword:reference caption");
    CHECK(b.removals[1].tag_number == 2);
    CHECK(b.removals[1].reason == "reward_below_tau");
    // each segment is a contiguous piece of the parent trace
    for (const auto& r : b.records) {
      REQUIRE_FALSE(r.trace_segment.empty());
      const auto first = std::find(n.trace.points.begin(), n.trace.points.end(), r.trace_segment.points.front());
      REQUIRE(first != n.trace.points.end());
      CHECK(std::equal(r.trace_segment.points.begin(), r.trace_segment.points.end(), first));
    }
  }

  TEST_CASE("build_dataset bookkeeping for bad generations") {
    Narrative a{"a", "x", std::nullopt, ramp(3), {}}, b{"b", "y", std::nullopt, ramp(3), {}},
        c{"c", "z", std::nullopt, ramp(3), {}};
    const std::map<std::string, std::string> gen{
        {"a", "Refer:<Q1>x</Q2>\n===\nQuestion:\n<Q1>q\n===\nAnswer:\nan answer here\n"},
        {"b", "Refer:y\n===\nQuestion:\nuntagged?\n===\nAnswer:\nan answer here\n===\nQuestion:\n<Q7>bad tag?\n"
              "===\nAnswer:\nanother answer here\n"}};
    WordCountScorer words;
    const auto r = build_dataset({a, b, c}, gen, default_keywords(), words, 0);
    CHECK(r.stats.raw_count == 3);
    CHECK(r.stats.kept_count == 0);
    REQUIRE(r.removals.size() == 3);
    CHECK(r.removals[0].reason.rfind("malformed", 0) == 0);
    CHECK(r.removals[1].reason == "ungrounded");
    CHECK(r.removals[2].reason == "unknown_tag");
    const auto empty = build_dataset({}, {}, default_keywords(), words, 0);
    CHECK(empty.records.empty());
    CHECK(empty.stats.survival_rate == 1.0);
  }

  TEST_CASE("canned generator passes text through or refuses") {
    CannedGenerator canned(std::map<std::string, std::string>{{"img", "raw \n text\t===\n"}});
    Narrative n{"img", "text", std::nullopt, ramp(2), {"c1.", "c2."}};
    CHECK(generate_qa(n, canned, builtin_prompt()) == "raw \n text\t===\n");
    n.image_id = "other";
    CHECK_THROWS_AS(generate_qa(n, canned, builtin_prompt()), LookupError);
  }

  TEST_CASE("requests replay the frozen prompt") {
    const auto& p = builtin_prompt();
    CHECK(p.system.find("<Q#>") != std::string::npos);
    REQUIRE(p.examples.size() == 2);
    CHECK(p.examples[0].role == "user");
    CHECK(p.examples[1].content.rfind("Refer:", 0) == 0);
    const auto disk = load_frozen_prompt(VOILA_DATA_DIR "/prompts");
    CHECK(disk.system == p.system);
    CHECK(disk.examples[1].content == p.examples[1].content);
    Narrative n{"img", "A dog.", std::nullopt, ramp(2), {"One.", "Two."}};
    const auto req = build_request(n, p);
    CHECK(req.messages.size() == 3);
    CHECK(req.messages.back().content == "Background: One.Two.\nReferable:A dog.");
    CHECK(request_to_json(req)["messages"].size() == 3);
  }

  TEST_CASE("generate_all keeps ids and rejects duplicates") {
    CannedGenerator canned({{"a", "A"}, {"b", "B"}, {"c", "C"}});
    std::vector<Narrative> ns;
    for (const char* id : {"c", "a", "b"}) ns.push_back({id, "t", std::nullopt, ramp(1), {}});
    const auto out = generate_all(ns, canned, builtin_prompt(), 3);
    CHECK(out.at("a") == "A");
    CHECK(out.at("c") == "C");
    ns.push_back(ns.front());
    CHECK_THROWS_AS(generate_all(ns, canned, builtin_prompt(), 2), ParameterError);
  }

  TEST_CASE("HTTP generator retries transient failures") {
    LoopbackServer server({503, 429}, R"({"text": "generated"})");
    HttpGenerator gen(server.url(), {4, std::chrono::milliseconds(1), 2.0});
    Narrative n{"img-9", "A dog.", std::nullopt, ramp(1), {}};
    CHECK(generate_qa(n, gen, builtin_prompt()) == "generated");
    CHECK(server.calls == 3);
    const auto body = nlohmann::json::parse(server.last_body);
    CHECK(body["system"] == builtin_prompt().system);
    CHECK(body["messages"].back()["content"] == "Background: \nReferable:A dog.");
  }

  TEST_CASE("HTTP generator gives up with the narrative id") {
    LoopbackServer server({503, 503, 503}, R"({"text": "late"})");
    HttpGenerator gen(server.url(), {2, std::chrono::milliseconds(1), 2.0});
    Narrative n{"img-7", "A dog.", std::nullopt, ramp(1), {}};
    try {
      generate_qa(n, gen, builtin_prompt());
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.key() == "img-7");
      CHECK(e.retriable());
    }
    LoopbackServer rejecting({400}, "{}");
    HttpGenerator gen2(rejecting.url(), {3, std::chrono::milliseconds(1), 2.0});
    CHECK_THROWS_AS(generate_qa(n, gen2, builtin_prompt()), BackendError);
    CHECK(rejecting.calls == 1);
  }
}
