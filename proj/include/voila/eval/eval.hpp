#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "voila/scorer.hpp"

namespace voila::eval {

enum class Order { forward, reversed };
enum class Mode { overall, helpful, grounding };

std::string_view to_string(Order order);
std::string_view to_string(Mode mode);
Order order_from_string(std::string_view name);
Mode mode_from_string(std::string_view name);
// Comma-separated list, e.g. "overall,helpful".
std::vector<Mode> parse_modes(std::string_view list);

struct EvalItem {
  std::string key;
  std::string question;
  std::string fact;
  std::string gt_answer;
  std::string response_a;
  std::string response_b;
};

struct JudgeRequest {
  std::string key;
  Order order = Order::forward;
  Mode mode = Mode::overall;
  std::string system;
  std::string user;
  // Candidates as listed in `user`; rule judges read these directly.
  std::string answer_1;
  std::string answer_2;
  int attempt = 1;
};

std::string_view system_prompt(Mode mode);

// Forward lists response_a first, reversed lists response_b first.
JudgeRequest build_prompt(const EvalItem& item, Order order, Mode mode);

// {"system", "messages": [{"role": "user", "content"}]}
nlohmann::json request_to_json(const JudgeRequest& request);

// "-1", "0" or "1" after trimming whitespace; anything else is nullopt.
std::optional<int> parse_verdict(std::string_view reply);

class Judge {
 public:
  virtual ~Judge() = default;
  // Raw reply text.
  virtual std::string respond(const JudgeRequest& request) = 0;
};

// Always prefers the first-listed candidate.
class FirstPositionJudge final : public Judge {
 public:
  std::string respond(const JudgeRequest& request) override;
};

// Prefers the longer candidate (by bytes); equal lengths tie.
class LongerAnswerJudge final : public Judge {
 public:
  std::string respond(const JudgeRequest& request) override;
};

class TieJudge final : public Judge {
 public:
  std::string respond(const JudgeRequest& request) override;
};

// Canned replies: {"<key>": {"forward|reversed": {"overall|helpful|grounding": "<reply>"}}}.
// A missing entry raises LookupError.
class MockJudge final : public Judge {
 public:
  explicit MockJudge(nlohmann::json replies);
  static MockJudge from_file(const std::string& path);
  std::string respond(const JudgeRequest& request) override;

 private:
  nlohmann::json replies_;
};

inline constexpr const char* kJudgeKeyEnv = "VOILA_JUDGE_API_KEY";

// POSTs request_to_json and reads {"text"}.
class HttpJudge final : public Judge {
 public:
  explicit HttpJudge(std::string url, std::string api_key_env = kJudgeKeyEnv);
  std::string respond(const JudgeRequest& request) override;

 private:
  std::string url_;
  std::string api_key_env_;
};

// "rule:first-position", "rule:longer-answer", "rule:tie-always",
// "mock:<file.json>" or an http(s) URL.
std::unique_ptr<Judge> make_judge(std::string_view spec);

inline constexpr int kVerdictRetries = 2;
inline constexpr std::string_view kFormatReminder =
    "\n\nYour previous reply was not a valid choice. Only respond with either '-1' or '0' or '1'.";

struct Verdict {
  int value = 0;
  std::string raw;
  int attempts = 1;
};

// Asks until the reply parses, appending the reminder on each retry. Throws
// VerdictError once the retries are spent.
Verdict query_verdict(Judge& judge, JudgeRequest request, int retries = kVerdictRetries);

struct PairwiseResult {
  std::string key;
  Mode mode = Mode::overall;
  double score = 0.0;  // negative favours A
  Verdict forward;
  Verdict reversed;
};

// score = (v_forward - v_reversed) / 2, aligning both verdicts to A's frame.
PairwiseResult dual_order_score(const EvalItem& item, Judge& judge, Mode mode,
                                int retries = kVerdictRetries);

struct AggregateResult {
  std::size_t wins_a = 0;
  std::size_t ties = 0;
  std::size_t wins_b = 0;
  std::size_t total = 0;
  double win_rate_a = 0.0;  // wins_a / total, ties included in the denominator
  double win_rate_b = 0.0;
  double tie_rate = 0.0;
  std::optional<double> mean_reward_a;
  std::optional<double> mean_reward_b;
};

// Counts by the sign of each score, so half scores are wins. Rewards, when
// given, must have one entry per result.
AggregateResult aggregate(const std::vector<PairwiseResult>& results,
                          const std::vector<double>* rewards_a = nullptr,
                          const std::vector<double>* rewards_b = nullptr);

struct DatasetEntry {
  std::string key;
  std::string question;
  std::string fact;
  std::string gt_answer;
};

std::vector<DatasetEntry> read_eval_dataset(const std::string& path);
// JSONL {key, response} -> key -> response.
std::map<std::string, std::string> read_responses(const std::string& path);

enum class AuditStatus { scored, skipped, unevaluated };

struct AuditEntry {
  std::string key;
  std::optional<Mode> mode;  // empty for items skipped before judging
  AuditStatus status = AuditStatus::scored;
  std::string reason;
  std::optional<PairwiseResult> result;
};

struct BenchmarkOptions {
  std::vector<Mode> modes{Mode::overall, Mode::helpful, Mode::grounding};
  std::size_t jobs = 1;
  int retries = kVerdictRetries;
  Scorer* reward = nullptr;  // scores (question, response) per side when set
};

struct ModeReport {
  Mode mode = Mode::overall;
  std::optional<AggregateResult> aggregate;  // empty when nothing was evaluated
  std::size_t unevaluated = 0;
};

struct BenchmarkReport {
  std::vector<ModeReport> modes;
  std::vector<AuditEntry> audit;  // key order, then mode order
  std::size_t items = 0;
  std::size_t skipped = 0;
};

BenchmarkReport run_benchmark(const std::vector<DatasetEntry>& dataset,
                              const std::map<std::string, std::string>& responses_a,
                              const std::map<std::string, std::string>& responses_b, Judge& judge,
                              const BenchmarkOptions& options = {});

nlohmann::json aggregate_to_json(const AggregateResult& a);
nlohmann::json report_to_json(const BenchmarkReport& report);
// One JSON object per line, sorted like report.audit.
std::string audit_to_jsonl(const BenchmarkReport& report);

}  // namespace voila::eval
