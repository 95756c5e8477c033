#include "voila/scorer.hpp"

#include <sstream>

#include "voila/error.hpp"
#include "voila/io/http.hpp"

namespace voila {

double WordCountScorer::score(std::string_view /*question*/, std::string_view answer) {
  std::istringstream words{std::string(answer)};
  std::string w;
  double n = 0.0;
  while (words >> w) n += 1.0;
  return n;
}

HttpScorer::HttpScorer(std::string url, std::string api_key_env)
    : url_(std::move(url)), api_key_env_(std::move(api_key_env)) {}

double HttpScorer::score(std::string_view question, std::string_view answer) {
  const auto res = io::post_json(url_, {{"question", question}, {"answer", answer}},
                                 io::env_or_empty(api_key_env_));
  if (res.status != 200) {
    throw BackendError("scorer returned HTTP " + std::to_string(res.status), url_);
  }
  try {
    return nlohmann::json::parse(res.body).at("score").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("scorer reply is not {\"score\": number}: ") + e.what(), url_,
                       false);
  }
}

std::unique_ptr<Scorer> make_scorer(std::string_view spec) {
  if (spec == "word-count") return std::make_unique<WordCountScorer>();
  if (spec.starts_with("http://") || spec.starts_with("https://")) {
    return std::make_unique<HttpScorer>(std::string(spec), kScorerKeyEnv);
  }
  throw ParameterError("unknown scorer '" + std::string(spec) + "' (expected word-count or a URL)");
}

}  // namespace voila
