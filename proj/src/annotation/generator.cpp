#include "voila/annotation/generator.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "prompts_data.hpp"
#include "voila/error.hpp"
#include "voila/io/binary.hpp"
#include "voila/io/http.hpp"
#include "voila/parallel.hpp"

namespace voila::annotation {

namespace {

std::string strip_final_newline(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string read_text(const std::filesystem::path& p) {
  const auto bytes = io::read_file(p.string());
  return strip_final_newline(std::string(bytes.begin(), bytes.end()));
}

bool retriable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

nlohmann::json request_to_json(const GenerationRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"system", request.system}, {"messages", std::move(messages)}};
}

CannedGenerator::CannedGenerator(std::map<std::string, std::string> completions)
    : completions_(std::move(completions)) {}

CannedGenerator CannedGenerator::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("canned completions must be a JSON object of id -> text");
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw FormatError("canned completion for '" + key + "' is not a string");
    out.emplace(key, value.get<std::string>());
  }
  return CannedGenerator(std::move(out));
}

CannedGenerator CannedGenerator::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open canned completions " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string CannedGenerator::generate(const GenerationRequest& request) {
  const auto it = completions_.find(request.key);
  if (it == completions_.end()) {
    throw LookupError("no canned completion for image id '" + request.key + "'");
  }
  return it->second;
}

HttpGenerator::HttpGenerator(std::string url, RetryPolicy retry, std::string api_key_env)
    : url_(std::move(url)), retry_(retry), api_key_env_(std::move(api_key_env)) {
  if (retry_.max_attempts < 1) throw ParameterError("HttpGenerator: max_attempts must be >= 1");
}

std::string HttpGenerator::generate(const GenerationRequest& request) {
  const nlohmann::json body = request_to_json(request);
  const std::string token = io::env_or_empty(api_key_env_);
  auto backoff = retry_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<std::chrono::milliseconds::rep>(backoff.count() * retry_.multiplier));
    }
    io::HttpResponse res;
    try {
      res = io::post_json(url_, body, token);
    } catch (const BackendError& e) {
      last_error = e.what();
      continue;
    }
    if (res.status == 200) {
      try {
        return nlohmann::json::parse(res.body).at("text").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw BackendError("generation for '" + request.key + "': reply is not {\"text\": string}: " +
                               e.what(),
                           request.key, false);
      }
    }
    last_error = "HTTP " + std::to_string(res.status);
    if (!retriable_status(res.status)) {
      throw BackendError("generation for '" + request.key + "' rejected: " + last_error,
                         request.key, false);
    }
  }
  throw BackendError("generation for '" + request.key + "' failed after " +
                         std::to_string(retry_.max_attempts) + " attempts: " + last_error,
                     request.key);
}

const FrozenPrompt& builtin_prompt() {
  static const FrozenPrompt prompt{strip_final_newline(prompt_data::kSystem),
                                   {{"user", strip_final_newline(prompt_data::kExampleUser)},
                                    {"assistant", strip_final_newline(prompt_data::kExampleAssistant)}}};
  return prompt;
}

FrozenPrompt load_frozen_prompt(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  FrozenPrompt prompt;
  prompt.system = read_text(root / "annotation_system.txt");
  const auto add_pair = [&](const fs::path& user, const fs::path& assistant) {
    if (!fs::exists(assistant)) throw IoError("missing " + assistant.string() + " for " + user.string());
    prompt.examples.push_back({"user", read_text(user)});
    prompt.examples.push_back({"assistant", read_text(assistant)});
  };
  if (fs::exists(root / "example_user.txt")) {
    add_pair(root / "example_user.txt", root / "example_assistant.txt");
  }
  for (int n = 1;; ++n) {
    const fs::path user = root / ("example" + std::to_string(n) + "_user.txt");
    if (!fs::exists(user)) break;
    add_pair(user, root / ("example" + std::to_string(n) + "_assistant.txt"));
  }
  return prompt;
}

std::string user_message(const Narrative& narrative) {
  std::string background;
  for (const auto& c : narrative.captions) background += c;
  return "Background: " + background + "\nReferable:" + narrative.text;
}

GenerationRequest build_request(const Narrative& narrative, const FrozenPrompt& prompt) {
  GenerationRequest req{narrative.image_id, prompt.system, prompt.examples};
  req.messages.push_back({"user", user_message(narrative)});
  return req;
}

std::string generate_qa(const Narrative& narrative, TextGenerator& generator,
                        const FrozenPrompt& prompt) {
  return generator.generate(build_request(narrative, prompt));
}

std::map<std::string, std::string> generate_all(const std::vector<Narrative>& narratives,
                                                TextGenerator& generator,
                                                const FrozenPrompt& prompt, std::size_t jobs) {
  std::map<std::string, std::string> out;
  for (const auto& n : narratives) {
    if (!out.emplace(n.image_id, std::string()).second) {
      throw ParameterError("duplicate narrative image id '" + n.image_id + "'");
    }
  }
  std::vector<std::string> texts(narratives.size());
  parallel_for(narratives.size(), jobs,
               [&](std::size_t i) { texts[i] = generate_qa(narratives[i], generator, prompt); });
  for (std::size_t i = 0; i < narratives.size(); ++i) out[narratives[i].image_id] = std::move(texts[i]);
  return out;
}

}  // namespace voila::annotation
