#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "voila/annotation/pipeline.hpp"

namespace voila::annotation {

struct ChatMessage {
  std::string role;  // "user" or "assistant"
  std::string content;
};

struct GenerationRequest {
  std::string key;  // image id, used for lookup and error reports
  std::string system;
  std::vector<ChatMessage> messages;
};

nlohmann::json request_to_json(const GenerationRequest& request);

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

// Replays stored completions keyed by image id. A missing key is a
// LookupError, never a fabricated reply.
class CannedGenerator final : public TextGenerator {
 public:
  explicit CannedGenerator(std::map<std::string, std::string> completions);
  static CannedGenerator from_json(const nlohmann::json& j);  // {"image_id": "text", ...}
  static CannedGenerator from_file(const std::string& path);
  std::string generate(const GenerationRequest& request) override;

 private:
  std::map<std::string, std::string> completions_;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

inline constexpr const char* kGeneratorKeyEnv = "VOILA_GEN_API_KEY";

// POSTs {"system", "messages"} and reads {"text"}. Transport errors and 429/5xx
// replies are retried with exponential backoff.
class HttpGenerator final : public TextGenerator {
 public:
  explicit HttpGenerator(std::string url, RetryPolicy retry = {},
                         std::string api_key_env = kGeneratorKeyEnv);
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string url_;
  RetryPolicy retry_;
  std::string api_key_env_;
};

// System prompt and in-context exchange replayed for every narrative.
struct FrozenPrompt {
  std::string system;
  std::vector<ChatMessage> examples;
};

// Compiled-in copy of data/prompts.
const FrozenPrompt& builtin_prompt();
// Reads annotation_system.txt and example_user.txt / example_assistant.txt
// (or numbered example<N>_user.txt pairs) from `dir`.
FrozenPrompt load_frozen_prompt(const std::string& dir);

// "Background: <captions>\nReferable:<narrative text>"
std::string user_message(const Narrative& narrative);
GenerationRequest build_request(const Narrative& narrative, const FrozenPrompt& prompt);

// The backend's raw output, verbatim.
std::string generate_qa(const Narrative& narrative, TextGenerator& generator,
                        const FrozenPrompt& prompt);

// Runs generate_qa over all narratives with at most `jobs` requests in
// flight. The first failure is rethrown after in-flight work finishes.
std::map<std::string, std::string> generate_all(const std::vector<Narrative>& narratives,
                                                TextGenerator& generator,
                                                const FrozenPrompt& prompt, std::size_t jobs = 1);

}  // namespace voila::annotation
