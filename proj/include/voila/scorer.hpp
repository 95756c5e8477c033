#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace voila {

// Answer-quality scorer (a reward model in production). Implementations
// throw voila::Error when a pair cannot be scored.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::string_view question, std::string_view answer) = 0;
};

// Whitespace-separated word count of the answer.
class WordCountScorer final : public Scorer {
 public:
  double score(std::string_view question, std::string_view answer) override;
};

// POSTs {"question", "answer"} and reads {"score"}; bearer token from the
// environment variable named by `api_key_env` when it is set.
class HttpScorer final : public Scorer {
 public:
  HttpScorer(std::string url, std::string api_key_env);
  double score(std::string_view question, std::string_view answer) override;

 private:
  std::string url_;
  std::string api_key_env_;
};

inline constexpr const char* kScorerKeyEnv = "VOILA_SCORER_API_KEY";

// "word-count" or an http(s) URL.
std::unique_ptr<Scorer> make_scorer(std::string_view spec);

}  // namespace voila
