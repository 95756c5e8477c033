#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "voila/error.hpp"
#include "voila/eval/eval.hpp"

using namespace voila;
using namespace voila::eval;

namespace {

EvalItem item(std::string key, std::string a, std::string b) {
  return {std::move(key), "What is it?", "A red fire hydrant in snow.", "A fire hydrant.", std::move(a), std::move(b)};
}

// Verdicts that depend only on which answer text is listed first.
class PreferTextJudge final : public Judge {
 public:
  explicit PreferTextJudge(std::string preferred) : preferred_(std::move(preferred)) {}
  std::string respond(const JudgeRequest& r) override {
    if (r.answer_1 == preferred_) return "-1";
    if (r.answer_2 == preferred_) return "1";
    return "0";
  }

 private:
  std::string preferred_;
};

class ScriptedJudge final : public Judge {
 public:
  explicit ScriptedJudge(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string respond(const JudgeRequest& r) override {
    requests.push_back(r);
    return replies_.at(std::min(requests.size() - 1, replies_.size() - 1));
  }
  std::vector<JudgeRequest> requests;

 private:
  std::vector<std::string> replies_;
};

std::vector<DatasetEntry> dataset(std::size_t n) {
  std::vector<DatasetEntry> d;
  for (std::size_t i = 0; i < n; ++i)
    d.push_back({"k" + std::to_string(100 + i), "Q" + std::to_string(i), "F", "G"});
  return d;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("prompt orders differ only in candidate order") {
    const auto it = item("k", "alpha", "beta");
    const auto f = build_prompt(it, Order::forward, Mode::overall);
    const auto r = build_prompt(it, Order::reversed, Mode::overall);
    CHECK(f.system == r.system);
    CHECK(f.answer_1 == "alpha");
    CHECK(r.answer_1 == "beta");
    std::string swapped = f.user;
    swapped.replace(swapped.find("Answer 1: alpha"), 15, "Answer 1: beta");
    swapped.replace(swapped.find("Answer 2: beta"), 14, "Answer 2: alpha");
    CHECK(swapped == r.user);
    CHECK(request_to_json(f).dump() == request_to_json(build_prompt(it, Order::forward, Mode::overall)).dump());
  }

  TEST_CASE("system prompts per mode") {
    CHECK(system_prompt(Mode::helpful).find("more helpful to the user") != std::string_view::npos);
    CHECK(system_prompt(Mode::grounding).find("factually grounded to the Fact provided") != std::string_view::npos);
    CHECK(system_prompt(Mode::overall).find("factually accurate, logical, and helpful") != std::string_view::npos);
    for (const auto m : {Mode::overall, Mode::helpful, Mode::grounding})
      CHECK(system_prompt(m).find("Only respond with either '-1' or '0' or '1'") != std::string_view::npos);
  }

  TEST_CASE("verdict parsing is strict") {
    CHECK(parse_verdict("-1") == -1);
    CHECK(parse_verdict(" 1\n") == 1);
    CHECK(parse_verdict("0") == 0);
    for (const char* bad : {"", "+1", "2", "-1.", "Answer 1", "1 0", "-0", "01"}) CHECK_FALSE(parse_verdict(bad));
  }

  TEST_CASE("dual-order scores for consistent and biased judges") {
    const auto it = item("k", "good answer", "bad");
    PreferTextJudge likes_a("good answer");
    const auto a = dual_order_score(it, likes_a, Mode::overall);
    CHECK(a.forward.value == -1);
    CHECK(a.reversed.value == 1);
    CHECK(a.score == -1.0);
    FirstPositionJudge first;
    CHECK(dual_order_score(it, first, Mode::overall).score == 0.0);
    TieJudge tie;
    CHECK(dual_order_score(it, tie, Mode::grounding).score == 0.0);
    ScriptedJudge half({"-1", "0"});
    CHECK(dual_order_score(it, half, Mode::overall).score == -0.5);
  }

  TEST_CASE("unparseable replies are retried with a reminder, then fail") {
    const auto it = item("k", "a", "b");
    ScriptedJudge flaky({"Answer 1 is better", "1", "1"});
    const auto r = dual_order_score(it, flaky, Mode::overall);
    CHECK(r.forward.attempts == 2);
    CHECK(r.forward.value == 1);
    CHECK(flaky.requests[1].user.size() > flaky.requests[0].user.size());
    CHECK(flaky.requests[1].user.find(kFormatReminder) != std::string::npos);
    ScriptedJudge broken({"maybe"});
    CHECK_THROWS_AS(dual_order_score(it, broken, Mode::overall), VerdictError);
    CHECK(broken.requests.size() == 3);
  }

  TEST_CASE("aggregation examples") {
    const auto results = [](std::vector<double> scores) {
      std::vector<PairwiseResult> rs;
      for (const double s : scores) rs.push_back({"k", Mode::overall, s, {}, {}});
      return rs;
    };
    const auto a = aggregate(results({-1, -1, 0, 1}));
    CHECK(a.wins_a == 2);
    CHECK(a.ties == 1);
    CHECK(a.wins_b == 1);
    CHECK(a.win_rate_a == 0.5);
    const auto t = aggregate(results({0, 0, 0}));
    CHECK(t.ties == 3);
    CHECK(t.win_rate_a == 0.0);
    CHECK(t.win_rate_b == 0.0);
    const auto h = aggregate(results({-0.5, 0.5}));
    CHECK(h.wins_a == 1);
    CHECK(h.wins_b == 1);
    const std::vector<double> ra{1, 2}, rb{3, 5};
    const auto w = aggregate(results({-1, 1}), &ra, &rb);
    CHECK(*w.mean_reward_a == 1.5);
    CHECK(*w.mean_reward_b == 4.0);
    CHECK_THROWS_AS(aggregate({}), EmptyInputError);
    CHECK_THROWS_AS(aggregate(results({1}), &ra, &rb), ShapeError);
  }

  TEST_CASE("self comparison ties and swapped sides negate scores") {
    const auto d = dataset(12);
    std::map<std::string, std::string> a, b;
    for (std::size_t i = 0; i < d.size(); ++i) {
      a[d[i].key] = std::string(3 + (i * 7) % 11, 'a');
      b[d[i].key] = std::string(3 + (i * 5) % 13, 'b');
    }
    LongerAnswerJudge longer;
    const auto self = run_benchmark(d, a, a, longer);
    for (const auto& m : self.modes) CHECK(m.aggregate->ties == d.size());
    const auto ab = run_benchmark(d, a, b, longer, {{Mode::overall}, 4});
    const auto ba = run_benchmark(d, b, a, longer, {{Mode::overall}, 1});
    REQUIRE(ab.audit.size() == ba.audit.size());
    for (std::size_t i = 0; i < ab.audit.size(); ++i) {
      CHECK(ab.audit[i].result->score == -ba.audit[i].result->score);
      // an order-blind judge never yields half scores
      CHECK(std::fabs(ab.audit[i].result->score) != 0.5);
    }
  }

  TEST_CASE("aggregate equals a recount of the audit log") {
    const auto d = dataset(20);
    std::map<std::string, std::string> a, b;
    for (std::size_t i = 0; i < d.size(); ++i) {
      a[d[i].key] = std::string(1 + i % 4, 'x');
      b[d[i].key] = std::string(1 + (i * 3) % 5, 'y');
    }
    LongerAnswerJudge longer;
    const auto report = run_benchmark(d, a, b, longer, {{Mode::overall, Mode::helpful}, 3});
    for (const auto& m : report.modes) {
      std::size_t wa = 0, wb = 0, ties = 0;
      for (const auto& e : report.audit) {
        if (e.mode != m.mode) continue;
        const std::size_t la = a.at(e.key).size(), lb = b.at(e.key).size();
        (la > lb ? wa : la < lb ? wb : ties)++;
      }
      CHECK(m.aggregate->wins_a == wa);
      CHECK(m.aggregate->wins_b == wb);
      CHECK(m.aggregate->ties == ties);
    }
  }

  TEST_CASE("missing responses are skipped and judge failures tallied") {
    auto d = dataset(4);
    std::map<std::string, std::string> a{{"k100", "x"}, {"k101", "y"}, {"k103", "z"}};
    std::map<std::string, std::string> b{{"k100", "x"}, {"k101", "yy"}, {"k102", "w"}, {"k103", "zz"}};
    MockJudge mock(nlohmann::json{{"k100", {{"forward", {{"overall", "0"}}}, {"reversed", {{"overall", "0"}}}}},
                                  {"k101", {{"forward", {{"overall", "1"}}}, {"reversed", {{"overall", "-1"}}}}},
                                  {"k103", {{"forward", {{"overall", "oops"}}}, {"reversed", {{"overall", "0"}}}}}});
    BenchmarkOptions opts;
    opts.modes = {Mode::overall};
    const auto r = run_benchmark(d, a, b, mock, opts);
    CHECK(r.items == 4);
    CHECK(r.skipped == 1);
    REQUIRE(r.modes.size() == 1);
    CHECK(r.modes[0].unevaluated == 1);
    CHECK(r.modes[0].aggregate->total == 2);
    CHECK(r.modes[0].aggregate->wins_b == 1);
    REQUIRE(r.audit.size() == 4);
    CHECK(r.audit[2].key == "k102");
    CHECK(r.audit[2].status == AuditStatus::skipped);
    CHECK(r.audit[3].status == AuditStatus::unevaluated);
    CHECK(audit_to_jsonl(r) == audit_to_jsonl(run_benchmark(d, a, b, mock, opts)));
  }

  TEST_CASE("judge specs and modes") {
    CHECK(dynamic_cast<FirstPositionJudge*>(make_judge("rule:first-position").get()) != nullptr);
    CHECK(dynamic_cast<TieJudge*>(make_judge("rule:tie-always").get()) != nullptr);
    CHECK_THROWS_AS(make_judge("rule:coin-flip"), ParameterError);
    CHECK(parse_modes("helpful, grounding") == std::vector<Mode>{Mode::helpful, Mode::grounding});
    CHECK_THROWS_AS(parse_modes("overall,best"), ParameterError);
    CHECK_THROWS_AS(parse_modes(""), ParameterError);
  }

  TEST_CASE("HTTP judge posts the chat request") {
    httplib::Server server;
    std::string seen;
    server.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
      seen = req.body;
      res.set_content(R"({"text": " -1 "})", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    HttpJudge judge("http://127.0.0.1:" + std::to_string(port) + "/judge");
    const auto v = query_verdict(judge, build_prompt(item("k", "a", "b"), Order::forward, Mode::helpful));
    server.stop();
    t.join();
    CHECK(v.value == -1);
    const auto body = nlohmann::json::parse(seen);
    CHECK(body["system"] == std::string(system_prompt(Mode::helpful)));
    CHECK(body["messages"][0]["role"] == "user");
  }
}
