#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "voila/annotation/pipeline.hpp"

namespace voila::chunk {

inline constexpr std::string_view kImage = "[image]";
inline constexpr std::string_view kFixation = "[fixation]";
inline constexpr std::string_view kAnswer = "<answer>";
inline constexpr std::string_view kEndOfChunk = "[endofchunk]";
inline constexpr std::array<std::string_view, 4> kSpecialTokens = {kImage, kFixation, kAnswer,
                                                                   kEndOfChunk};

struct Chunk {
  std::string context;  // previously rendered turns, empty for the first turn
  std::string instruction;
  std::string answer;
};

// {context }[image] User:[fixation]{instruction} GPT:<answer>{answer}.[endofchunk]
// Throws InjectionError when a special literal occurs in the instruction or
// answer, ParameterError when either is empty.
std::string render_chunk(const Chunk& chunk);

// Renders turns in order, each using the previous rendering as context.
std::string render_conversation(const std::vector<Chunk>& turns);

// Whitespace tokens, with special literals always split out as their own
// tokens.
std::vector<std::string> tokenize(std::string_view text);

struct LossMask {
  std::vector<bool> mask;
  bool degenerate = false;  // nothing to predict: no token is masked true
};

// True strictly after each <answer> up to and including the next
// [endofchunk]. Throws FormatError without any <answer>.
LossMask loss_mask(const std::vector<std::string>& tokens);

// Indirect question as instruction; one trailing '.' of the answer is dropped
// since the template adds it.
Chunk chunk_from_record(const annotation::QARecord& record);

// {"text", "tokens", "mask"}; "degenerate" is added when set.
nlohmann::json chunk_to_json(std::string_view rendered);

}  // namespace voila::chunk
