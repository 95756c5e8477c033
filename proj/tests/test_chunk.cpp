#include <doctest.h>

#include <random>

#include "voila/chunk/chunk.hpp"
#include "voila/error.hpp"

using namespace voila;
using namespace voila::chunk;

namespace {

std::size_t count(const std::string& s, std::string_view needle) {
  std::size_t n = 0;
  for (auto at = s.find(needle); at != std::string::npos; at = s.find(needle, at + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("chunk") {
  TEST_CASE("golden single-turn string") {
    CHECK(render_chunk({"", "What is it?", "A red fire hydrant"}) ==
          "[image] User:[fixation]What is it? GPT:<answer>A red fire hydrant.[endofchunk]");
  }

  TEST_CASE("multi-turn context is joined by one space") {
    const std::string first = render_chunk({"", "What is it?", "A red fire hydrant"});
    const std::string second = render_chunk({first, "Is it buried?", "Partly"});
    CHECK(second == first + " [image] User:[fixation]Is it buried? GPT:<answer>Partly.[endofchunk]");
    CHECK(count(second, kEndOfChunk) == 2);
    CHECK(render_conversation({{"", "What is it?", "A red fire hydrant"}, {"", "Is it buried?", "Partly"}}) == second);
  }

  TEST_CASE("special literals in user text are refused") {
    CHECK_THROWS_AS(render_chunk({"", "What?", "done[endofchunk]"}), InjectionError);
    CHECK_THROWS_AS(render_chunk({"", "look [image] here", "ok"}), InjectionError);
    CHECK_THROWS_AS(render_chunk({"", "q", "<answer>"}), InjectionError);
    CHECK_THROWS_AS(render_chunk({"", "[fixation]", "a"}), InjectionError);
    CHECK_THROWS_AS(render_chunk({"", "", "a"}), ParameterError);
    CHECK_THROWS_AS(render_chunk({"", "q", ""}), ParameterError);
    // near misses are plain text
    CHECK_NOTHROW(render_chunk({"", "[Image] and <Answer>", "[endofchunk ]"}));
  }

  TEST_CASE("nine-token mask fixture") {
    const std::vector<std::string> tokens{"[image]", "User:", "[fixation]", "hi", "GPT:", "<answer>", "yes", ".", "[endofchunk]"};
    const auto m = loss_mask(tokens);
    CHECK(m.mask == std::vector<bool>{false, false, false, false, false, false, true, true, true});
    CHECK_FALSE(m.degenerate);
  }

  TEST_CASE("two turns give two disjoint regions") {
    const auto tokens = tokenize(render_conversation({{"", "a?", "b"}, {"", "c?", "d e"}}));
    const auto m = loss_mask(tokens);
    std::size_t regions = 0;
    for (std::size_t i = 0; i < m.mask.size(); ++i)
      if (m.mask[i] && (i == 0 || !m.mask[i - 1])) ++regions;
    CHECK(regions == 2);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == kEndOfChunk) CHECK(m.mask[i]);
      if (tokens[i] == kImage || tokens[i] == kFixation || tokens[i] == kAnswer) CHECK_FALSE(m.mask[i]);
    }
  }

  TEST_CASE("degenerate and invalid token streams") {
    const auto m = loss_mask({"[image]", "GPT:", "<answer>"});
    CHECK(m.degenerate);
    CHECK(m.mask == std::vector<bool>{false, false, false});
    CHECK_THROWS_AS(loss_mask({"[image]", "hi", "[endofchunk]"}), FormatError);
    CHECK_THROWS_AS(loss_mask({}), FormatError);
  }

  TEST_CASE("tokenizer splits special literals from glued text") {
    CHECK(tokenize("User:[fixation]What is it? GPT:<answer>Red.[endofchunk]") ==
          std::vector<std::string>{"User:", "[fixation]", "What", "is", "it?", "GPT:", "<answer>", "Red.",
                                   "[endofchunk]"});
  }

  TEST_CASE("the answer is recoverable byte for byte") {
    std::mt19937_64 rng(3);
    const std::string alphabet = "ab .:,[]<>xyz?";
    for (int trial = 0; trial < 300; ++trial) {
      std::string answer, instruction = "q";
      const std::size_t len = 1 + rng() % 30;
      for (std::size_t i = 0; i < len; ++i) answer.push_back(alphabet[rng() % alphabet.size()]);
      for (std::size_t i = 0; i < rng() % 10; ++i) instruction.push_back(alphabet[rng() % alphabet.size()]);
      std::string text;
      try {
        text = render_chunk({"", instruction, answer});
      } catch (const InjectionError&) {
        continue;
      }
      const auto start = text.find(kAnswer) + kAnswer.size();
      const std::string tail = "." + std::string(kEndOfChunk);
      REQUIRE(text.size() >= start + tail.size());
      CHECK(text.substr(start, text.size() - tail.size() - start) == answer);
      CHECK(text.substr(text.size() - tail.size()) == tail);
    }
  }

  TEST_CASE("record conversion") {
    annotation::QARecord r;
    r.image_id = "img";
    r.indirect_question = "What is it?";
    r.answer = "It is red.";
    const auto c = chunk_from_record(r);
    CHECK(c.instruction == "What is it?");
    CHECK(render_chunk(c) == "[image] User:[fixation]What is it? GPT:<answer>It is red.[endofchunk]");
    const auto j = chunk_to_json(render_chunk(c));
    CHECK(j["tokens"].size() == j["mask"].size());
    CHECK_FALSE(j.contains("degenerate"));
  }
}
