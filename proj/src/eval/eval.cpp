#include "voila/eval/eval.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "voila/error.hpp"
#include "voila/io/http.hpp"
#include "voila/parallel.hpp"

namespace voila::eval {

namespace {

constexpr std::string_view kOverallPrompt =
    "Given a question along with the ground truth description and answer of an image, evaluate "
    "the two provided candidate answers. Determine which answer is factually accurate, logical, "
    "and helpful to the user. if you think anwser 1 is better, respond with -1, if answer 2 is "
    "better respond with 1, if you think the result is tie, output 0. Only respond with either "
    "'-1' or '0' or '1' to indicate your choice.";

constexpr std::string_view kHelpfulPrompt =
    "Given a question along with the ground truth description and answer of an image, evaluate "
    "the two provided candidate answers. Determine which answer is actually solves the user "
    "problem and more helpful to the user. if you think anwser 1 is better, respond with -1, if "
    "answer 2 is better respond with 1, if you think the result is tie, output 0. Only respond "
    "with either '-1' or '0' or '1' to indicate your choice.";

constexpr std::string_view kGroundingPrompt =
    "Given a question along with the ground truth description and answer of an image, evaluate "
    "the two provided candidate answers. Determine which answer is factually grounded to the Fact "
    "provided. if you think anwser 1 is better, respond with -1, if answer 2 is better respond "
    "with 1, if you think the result is tie, output 0. Only respond with either '-1' or '0' or "
    "'1' to indicate your choice.";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string_view to_string(AuditStatus s) {
  switch (s) {
    case AuditStatus::scored: return "scored";
    case AuditStatus::skipped: return "skipped";
    case AuditStatus::unevaluated: return "unevaluated";
  }
  return "?";
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

nlohmann::json verdict_to_json(const Verdict& v) {
  return {{"verdict", v.value}, {"raw", v.raw}, {"attempts", v.attempts}};
}

}  // namespace

std::string_view to_string(Order order) { return order == Order::forward ? "forward" : "reversed"; }

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::overall: return "overall";
    case Mode::helpful: return "helpful";
    case Mode::grounding: return "grounding";
  }
  return "?";
}

Order order_from_string(std::string_view name) {
  if (name == "forward") return Order::forward;
  if (name == "reversed") return Order::reversed;
  throw ParameterError("unknown order '" + std::string(name) + "'");
}

Mode mode_from_string(std::string_view name) {
  if (name == "overall") return Mode::overall;
  if (name == "helpful") return Mode::helpful;
  if (name == "grounding") return Mode::grounding;
  throw ParameterError("unknown judging mode '" + std::string(name) +
                       "' (expected overall, helpful or grounding)");
}

std::vector<Mode> parse_modes(std::string_view list) {
  std::vector<Mode> modes;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = std::min(list.find(',', start), list.size());
    const std::string name = trim(list.substr(start, comma - start));
    if (!name.empty()) {
      const Mode m = mode_from_string(name);
      if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
    }
    start = comma + 1;
  }
  if (modes.empty()) throw ParameterError("no judging modes given");
  return modes;
}

std::string_view system_prompt(Mode mode) {
  switch (mode) {
    case Mode::overall: return kOverallPrompt;
    case Mode::helpful: return kHelpfulPrompt;
    case Mode::grounding: return kGroundingPrompt;
  }
  return kOverallPrompt;
}

JudgeRequest build_prompt(const EvalItem& item, Order order, Mode mode) {
  JudgeRequest req;
  req.key = item.key;
  req.order = order;
  req.mode = mode;
  req.system = std::string(system_prompt(mode));
  req.answer_1 = order == Order::forward ? item.response_a : item.response_b;
  req.answer_2 = order == Order::forward ? item.response_b : item.response_a;
  req.user = "Question: " + item.question + "\nFact: " + item.fact +
             "\nGround truth answer: " + item.gt_answer + "\nAnswer 1: " + req.answer_1 +
             "\nAnswer 2: " + req.answer_2;
  return req;
}

nlohmann::json request_to_json(const JudgeRequest& request) {
  return {{"system", request.system},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.user}}})}};
}

std::optional<int> parse_verdict(std::string_view reply) {
  const std::string t = trim(reply);
  if (t == "-1") return -1;
  if (t == "0") return 0;
  if (t == "1") return 1;
  return std::nullopt;
}

std::string FirstPositionJudge::respond(const JudgeRequest&) { return "-1"; }

std::string LongerAnswerJudge::respond(const JudgeRequest& request) {
  if (request.answer_1.size() > request.answer_2.size()) return "-1";
  if (request.answer_1.size() < request.answer_2.size()) return "1";
  return "0";
}

std::string TieJudge::respond(const JudgeRequest&) { return "0"; }

MockJudge::MockJudge(nlohmann::json replies) : replies_(std::move(replies)) {
  if (!replies_.is_object()) throw FormatError("mock judge replies must be a JSON object");
}

MockJudge MockJudge::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mock judge file " + path);
  try {
    return MockJudge(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string MockJudge::respond(const JudgeRequest& request) {
  const std::string order(to_string(request.order));
  const std::string mode(to_string(request.mode));
  const auto key = replies_.find(request.key);
  if (key != replies_.end() && key->is_object()) {
    const auto o = key->find(order);
    if (o != key->end() && o->is_object()) {
      const auto m = o->find(mode);
      if (m != o->end() && m->is_string()) return m->get<std::string>();
    }
  }
  throw LookupError("mock judge has no reply for (" + request.key + ", " + order + ", " + mode + ")");
}

HttpJudge::HttpJudge(std::string url, std::string api_key_env)
    : url_(std::move(url)), api_key_env_(std::move(api_key_env)) {}

std::string HttpJudge::respond(const JudgeRequest& request) {
  const auto res = io::post_json(url_, request_to_json(request), io::env_or_empty(api_key_env_));
  if (res.status != 200) {
    throw BackendError("judge returned HTTP " + std::to_string(res.status) + " for '" +
                           request.key + "'",
                       request.key, res.status == 429 || res.status >= 500);
  }
  try {
    return nlohmann::json::parse(res.body).at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("judge reply is not {\"text\": string}: ") + e.what(),
                       request.key, false);
  }
}

std::unique_ptr<Judge> make_judge(std::string_view spec) {
  if (spec == "rule:first-position") return std::make_unique<FirstPositionJudge>();
  if (spec == "rule:longer-answer") return std::make_unique<LongerAnswerJudge>();
  if (spec == "rule:tie-always") return std::make_unique<TieJudge>();
  if (spec.starts_with("mock:")) {
    return std::make_unique<MockJudge>(MockJudge::from_file(std::string(spec.substr(5))));
  }
  if (spec.starts_with("http://") || spec.starts_with("https://")) {
    return std::make_unique<HttpJudge>(std::string(spec));
  }
  throw ParameterError("unknown judge '" + std::string(spec) +
                       "' (expected rule:<name>, mock:<file> or an http(s) URL)");
}

Verdict query_verdict(Judge& judge, JudgeRequest request, int retries) {
  std::string raw;
  for (int attempt = 1; attempt <= retries + 1; ++attempt) {
    if (attempt > 1) request.user += kFormatReminder;
    request.attempt = attempt;
    raw = judge.respond(request);
    if (const auto v = parse_verdict(raw)) return {*v, raw, attempt};
  }
  throw VerdictError("judge reply for (" + request.key + ", " + std::string(to_string(request.order)) +
                     ", " + std::string(to_string(request.mode)) + ") is not a verdict after " +
                     std::to_string(retries + 1) + " attempts; last reply: '" + raw + "'");
}

PairwiseResult dual_order_score(const EvalItem& item, Judge& judge, Mode mode, int retries) {
  PairwiseResult r;
  r.key = item.key;
  r.mode = mode;
  r.forward = query_verdict(judge, build_prompt(item, Order::forward, mode), retries);
  r.reversed = query_verdict(judge, build_prompt(item, Order::reversed, mode), retries);
  r.score = (r.forward.value + (-1 * r.reversed.value)) / 2.0;
  return r;
}

AggregateResult aggregate(const std::vector<PairwiseResult>& results,
                          const std::vector<double>* rewards_a, const std::vector<double>* rewards_b) {
  if (results.empty()) throw EmptyInputError("aggregate: no evaluated results");
  AggregateResult a;
  for (const auto& r : results) {
    if (r.score < 0) {
      ++a.wins_a;
    } else if (r.score > 0) {
      ++a.wins_b;
    } else {
      ++a.ties;
    }
  }
  a.total = results.size();
  const double n = static_cast<double>(a.total);
  a.win_rate_a = static_cast<double>(a.wins_a) / n;
  a.win_rate_b = static_cast<double>(a.wins_b) / n;
  a.tie_rate = static_cast<double>(a.ties) / n;
  const auto mean = [&](const std::vector<double>* rewards, const char* side) -> std::optional<double> {
    if (rewards == nullptr) return std::nullopt;
    if (rewards->size() != results.size()) {
      throw ShapeError(std::string("aggregate: ") + side + " has " + std::to_string(rewards->size()) +
                       " rewards for " + std::to_string(results.size()) + " results");
    }
    double sum = 0.0;
    for (const double x : *rewards) sum += x;
    return sum / n;
  };
  a.mean_reward_a = mean(rewards_a, "side A");
  a.mean_reward_b = mean(rewards_b, "side B");
  return a;
}

std::vector<DatasetEntry> read_eval_dataset(const std::string& path) {
  std::vector<DatasetEntry> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("key").get<std::string>(), j.at("question").get<std::string>(),
                   j.at("fact").get<std::string>(), j.at("gt_answer").get<std::string>()});
  });
  return out;
}

std::map<std::string, std::string> read_responses(const std::string& path) {
  std::map<std::string, std::string> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    const auto key = j.at("key").get<std::string>();
    if (!out.emplace(key, j.at("response").get<std::string>()).second) {
      throw FormatError(path + ": duplicate response key '" + key + "'");
    }
  });
  return out;
}

BenchmarkReport run_benchmark(const std::vector<DatasetEntry>& dataset,
                              const std::map<std::string, std::string>& responses_a,
                              const std::map<std::string, std::string>& responses_b, Judge& judge,
                              const BenchmarkOptions& options) {
  if (options.modes.empty()) throw ParameterError("run_benchmark: no judging modes");
  std::vector<const DatasetEntry*> entries;
  std::set<std::string> keys;
  for (const auto& e : dataset) {
    if (!keys.insert(e.key).second) throw FormatError("duplicate dataset key '" + e.key + "'");
    entries.push_back(&e);
  }
  std::sort(entries.begin(), entries.end(),
            [](const DatasetEntry* a, const DatasetEntry* b) { return a->key < b->key; });

  BenchmarkReport report;
  report.items = entries.size();
  std::vector<EvalItem> items;
  std::vector<AuditEntry> skipped;
  for (const DatasetEntry* e : entries) {
    const auto a = responses_a.find(e->key);
    const auto b = responses_b.find(e->key);
    std::string reason;
    if (a == responses_a.end()) {
      reason = "missing response A";
    } else if (b == responses_b.end()) {
      reason = "missing response B";
    } else if (e->question.empty() || e->fact.empty() || e->gt_answer.empty() ||
               a->second.empty() || b->second.empty()) {
      reason = "empty field";
    }
    if (!reason.empty()) {
      skipped.push_back({e->key, std::nullopt, AuditStatus::skipped, reason, std::nullopt});
      continue;
    }
    items.push_back({e->key, e->question, e->fact, e->gt_answer, a->second, b->second});
  }
  report.skipped = skipped.size();

  const std::size_t n_modes = options.modes.size();
  std::vector<AuditEntry> judged(items.size() * n_modes);
  parallel_for(judged.size(), options.jobs, [&](std::size_t i) {
    const EvalItem& item = items[i / n_modes];
    const Mode mode = options.modes[i % n_modes];
    AuditEntry& entry = judged[i];
    entry.key = item.key;
    entry.mode = mode;
    try {
      entry.result = dual_order_score(item, judge, mode, options.retries);
      entry.status = AuditStatus::scored;
    } catch (const Error& e) {
      entry.status = AuditStatus::unevaluated;
      entry.reason = e.what();
    }
  });

  for (std::size_t m = 0; m < n_modes; ++m) {
    ModeReport mr;
    mr.mode = options.modes[m];
    std::vector<PairwiseResult> results;
    std::vector<double> ra, rb;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const AuditEntry& entry = judged[i * n_modes + m];
      if (!entry.result) {
        ++mr.unevaluated;
        continue;
      }
      results.push_back(*entry.result);
      if (options.reward != nullptr) {
        ra.push_back(options.reward->score(items[i].question, items[i].response_a));
        rb.push_back(options.reward->score(items[i].question, items[i].response_b));
      }
    }
    if (!results.empty()) {
      mr.aggregate = options.reward != nullptr ? aggregate(results, &ra, &rb) : aggregate(results);
    }
    report.modes.push_back(std::move(mr));
  }

  // Merge skipped and judged entries back into key order.
  std::size_t s = 0, j = 0;
  while (s < skipped.size() || j < judged.size()) {
    if (j >= judged.size() || (s < skipped.size() && skipped[s].key < judged[j].key)) {
      report.audit.push_back(std::move(skipped[s++]));
    } else {
      report.audit.push_back(std::move(judged[j++]));
    }
  }
  return report;
}

nlohmann::json aggregate_to_json(const AggregateResult& a) {
  nlohmann::json j = {{"wins_a", a.wins_a},         {"ties", a.ties},
                      {"wins_b", a.wins_b},         {"total", a.total},
                      {"win_rate_a", a.win_rate_a}, {"win_rate_b", a.win_rate_b},
                      {"tie_rate", a.tie_rate}};
  if (a.mean_reward_a) j["mean_reward_a"] = *a.mean_reward_a;
  if (a.mean_reward_b) j["mean_reward_b"] = *a.mean_reward_b;
  return j;
}

nlohmann::json report_to_json(const BenchmarkReport& report) {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& m : report.modes) {
    nlohmann::json entry = {{"unevaluated", m.unevaluated}};
    entry["aggregate"] = m.aggregate ? aggregate_to_json(*m.aggregate) : nlohmann::json(nullptr);
    modes[std::string(to_string(m.mode))] = std::move(entry);
  }
  return {{"items", report.items}, {"skipped", report.skipped}, {"modes", std::move(modes)}};
}

std::string audit_to_jsonl(const BenchmarkReport& report) {
  std::string out;
  for (const auto& e : report.audit) {
    nlohmann::json j = {{"key", e.key}, {"status", to_string(e.status)}};
    j["mode"] = e.mode ? nlohmann::json(to_string(*e.mode)) : nlohmann::json(nullptr);
    if (!e.reason.empty()) j["reason"] = e.reason;
    if (e.result) {
      j["score"] = e.result->score;
      j["forward"] = verdict_to_json(e.result->forward);
      j["reversed"] = verdict_to_json(e.result->reversed);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace voila::eval
