#include "voila/chunk/chunk.hpp"

#include <algorithm>
#include <cctype>

#include "voila/error.hpp"

namespace voila::chunk {

namespace {

void check_text(std::string_view field, std::string_view text) {
  if (text.empty()) throw ParameterError("chunk " + std::string(field) + " is empty");
  for (const auto tok : kSpecialTokens) {
    if (const auto at = text.find(tok); at != std::string_view::npos) {
      throw InjectionError("chunk " + std::string(field) + " contains the special token " +
                           std::string(tok) + " at byte " + std::to_string(at));
    }
  }
}

}  // namespace

std::string render_chunk(const Chunk& chunk) {
  check_text("instruction", chunk.instruction);
  check_text("answer", chunk.answer);
  std::string out;
  if (!chunk.context.empty()) {
    out += chunk.context;
    out += ' ';
  }
  out += kImage;
  out += " User:";
  out += kFixation;
  out += chunk.instruction;
  out += " GPT:";
  out += kAnswer;
  out += chunk.answer;
  out += '.';
  out += kEndOfChunk;
  return out;
}

std::string render_conversation(const std::vector<Chunk>& turns) {
  std::string rendered;
  for (const auto& t : turns) rendered = render_chunk({rendered, t.instruction, t.answer});
  return rendered;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    bool special = false;
    for (const auto tok : kSpecialTokens) {
      if (text.substr(i, tok.size()) == tok) {
        flush();
        tokens.emplace_back(tok);
        i += tok.size();
        special = true;
        break;
      }
    }
    if (special) continue;
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      flush();
    } else {
      word.push_back(text[i]);
    }
    ++i;
  }
  flush();
  return tokens;
}

LossMask loss_mask(const std::vector<std::string>& tokens) {
  LossMask out;
  out.mask.assign(tokens.size(), false);
  bool seen_answer = false;
  bool inside = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == kAnswer) {
      seen_answer = inside = true;
      continue;
    }
    if (!inside) continue;
    out.mask[i] = true;
    if (tokens[i] == kEndOfChunk) inside = false;
  }
  if (!seen_answer) throw FormatError("loss_mask: token stream has no " + std::string(kAnswer) + " token");
  out.degenerate = std::find(out.mask.begin(), out.mask.end(), true) == out.mask.end();
  return out;
}

Chunk chunk_from_record(const annotation::QARecord& record) {
  std::string answer = record.answer;
  if (!answer.empty() && answer.back() == '.') answer.pop_back();
  return {"", record.indirect_question, answer};
}

nlohmann::json chunk_to_json(std::string_view rendered) {
  const auto tokens = tokenize(rendered);
  const auto mask = loss_mask(tokens);
  nlohmann::json j = {{"text", rendered}, {"tokens", tokens}, {"mask", mask.mask}};
  if (mask.degenerate) j["degenerate"] = true;
  return j;
}

}  // namespace voila::chunk
