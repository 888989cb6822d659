#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "rstd/errors.hpp"
#include "rstd/metrics.hpp"

namespace {

using rstd::CallRecord;
using rstd::RunReport;
using rstd::Strategy;

CallRecord call(std::string subtask, std::uint32_t attempt, std::uint64_t tokens, bool passed = true,
                bool retry = false, bool injected = false, double latency = 1.0) {
    CallRecord c;
    c.subtask = std::move(subtask);
    c.attempt = attempt;
    c.prompt_tokens = tokens / 4;
    c.completion_tokens = tokens - tokens / 4;
    c.model_latency = latency;
    c.validation_passed = passed;
    c.retry_flag = retry;
    c.injection_applied = injected;
    return c;
}

RunReport report(Strategy s, std::uint32_t run_index, std::vector<CallRecord> calls, double wall = 0.0) {
    RunReport r;
    r.pipeline_id = "p";
    r.strategy = s;
    r.run_index = run_index;
    r.calls = std::move(calls);
    for (auto& c : r.calls) {
        c.run_index = run_index;
    }
    r.wall_seconds = wall;
    r.correct = true;
    r.finalize();
    return r;
}

// Two-pass reference: mean first, then squared deviations.
std::pair<double, double> two_pass(const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

TEST(Summarize, TwoPoints) {
    const std::vector<double> xs{1.0, 3.0};
    const auto s = rstd::summarize(xs);
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_DOUBLE_EQ(s.sd, std::sqrt(2.0));
    EXPECT_EQ(s.n, 2u);
}

TEST(Summarize, SingleSampleHasZeroSd) {
    const std::vector<double> xs{5.0};
    EXPECT_EQ(rstd::summarize(xs).sd, 0.0);
}

TEST(Summarize, MatchesTwoPassOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> xs(std::uniform_int_distribution<std::size_t>(1, 60)(rng));
        const double scale = std::pow(10.0, std::uniform_int_distribution<int>(0, 4)(rng));
        for (auto& x : xs) x = std::uniform_real_distribution<double>(0.0, scale)(rng);
        const auto s = rstd::summarize(xs);
        const auto [mean, sd] = two_pass(xs);
        EXPECT_NEAR(s.mean, mean, 1e-9 * std::max(1.0, std::abs(mean)));
        EXPECT_NEAR(s.sd, sd, 1e-9 * std::max(1.0, sd));
    }
}

TEST(Aggregate, IdenticalReports) {
    std::vector<RunReport> reports;
    for (std::uint32_t i = 1; i <= 10; ++i) {
        reports.push_back(report(Strategy::rstd, i, {call("S1", 1, 2716)}));
    }
    const auto t = rstd::aggregate(reports);
    EXPECT_EQ(t.runs, 10u);
    EXPECT_EQ(t.tokens.mean, 2716.0);
    EXPECT_EQ(t.tokens.sd, 0.0);
    EXPECT_EQ(t.correct_fraction, 1.0);
}

TEST(Aggregate, PermutationInvariant) {
    std::mt19937_64 rng(5);
    std::vector<RunReport> reports;
    for (std::uint32_t i = 1; i <= 12; ++i) {
        std::vector<CallRecord> calls;
        const int n = std::uniform_int_distribution<int>(1, 6)(rng);
        for (int k = 0; k < n; ++k) {
            calls.push_back(call("S" + std::to_string(k), 1, std::uniform_int_distribution<int>(10, 900)(rng), true,
                                 k % 3 == 2, false, std::uniform_real_distribution<double>(0.1, 3.0)(rng)));
        }
        reports.push_back(report(Strategy::static_decomposition, i, calls, 20.0));
    }
    const auto a = rstd::aggregate(reports);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(reports.begin(), reports.end(), rng);
        const auto b = rstd::aggregate(reports);
        EXPECT_NEAR(a.tokens.mean, b.tokens.mean, 1e-9);
        EXPECT_NEAR(a.tokens.sd, b.tokens.sd, 1e-9);
        EXPECT_NEAR(a.retry_tokens.mean, b.retry_tokens.mean, 1e-9);
        EXPECT_NEAR(a.model_seconds.sd, b.model_seconds.sd, 1e-9);
        EXPECT_NEAR(a.calls.mean, b.calls.mean, 1e-9);
    }
}

TEST(Aggregate, MixedConfigRejected) {
    std::vector<RunReport> reports{report(Strategy::rstd, 1, {}), report(Strategy::monolithic, 2, {})};
    EXPECT_THROW(rstd::aggregate(reports), rstd::MixedConfig);
    reports[1].strategy = Strategy::rstd;
    reports[1].pipeline_id = "other";
    EXPECT_THROW(rstd::aggregate(reports), rstd::MixedConfig);
    EXPECT_THROW(rstd::aggregate({}), rstd::Error);
}

TEST(RetryTokens, CleanAndInjected) {
    EXPECT_EQ(rstd::retry_tokens(report(Strategy::rstd, 1, {call("S1", 1, 700), call("S2", 1, 600)})), 0u);
    const auto r = report(Strategy::monolithic, 1,
                          {call("monolithic", 1, 904, false, false, true), call("monolithic", 2, 904, true, true)});
    EXPECT_EQ(rstd::retry_tokens(r), 904u);
    EXPECT_EQ(r.retry_tokens, 904u);
    EXPECT_EQ(r.total_tokens, 1808u);
    EXPECT_EQ(r.baseline_tokens(), 904u);
}

TEST(FrameworkOverhead, WallMinusModel) {
    auto r = report(Strategy::rstd, 1, {call("a", 1, 1, true, false, false, 12.5), call("b", 1, 1, true, false, false, 7.5)},
                    20.3);
    EXPECT_NEAR(rstd::measure_framework_overhead(r), 0.3, 1e-12);
    EXPECT_NEAR(rstd::framework_fraction(r), 0.3 / 20.3, 1e-12);
    EXPECT_DOUBLE_EQ(r.model_seconds, 20.0);
    EXPECT_NEAR(r.framework_seconds, 0.3, 1e-12);

    auto zero = report(Strategy::rstd, 1, {call("a", 1, 1, true, false, false, 0.0)}, 0.25);
    EXPECT_DOUBLE_EQ(rstd::measure_framework_overhead(zero), 0.25);
    EXPECT_EQ(rstd::framework_fraction(report(Strategy::rstd, 1, {})), 0.0);
}

TEST(FailureRate, TwoInOneHundred) {
    std::vector<RunReport> reports;
    for (std::uint32_t i = 1; i <= 100; ++i) {
        std::vector<CallRecord> calls{call("S1", 1, 10)};
        if (i == 7 || i == 9) {
            calls.push_back(call("S2", 1, 10, false));
            calls.push_back(call("S2", 2, 10, true, true));
        } else {
            calls.push_back(call("S2", 1, 10));
        }
        reports.push_back(report(Strategy::rstd, i, calls));
    }
    EXPECT_DOUBLE_EQ(rstd::failure_rate(reports, "S2"), 0.02);
    EXPECT_EQ(rstd::failure_rate(reports, "S1"), 0.0);
}

TEST(FailureRate, AllFailAndInjectedExcluded) {
    std::vector<RunReport> all_fail{report(Strategy::rstd, 1, {call("S2", 1, 1, false), call("S2", 2, 1, false)})};
    EXPECT_EQ(rstd::failure_rate(all_fail, "S2"), 1.0);
    std::vector<RunReport> injected{report(Strategy::rstd, 1, {call("S3", 1, 1, false, false, true)})};
    EXPECT_EQ(rstd::failure_rate(injected, "S3"), 0.0);
    EXPECT_THROW(rstd::failure_rate({}, "S2"), rstd::PreconditionViolated);
}

std::vector<RunReport> three_way(std::size_t reps) {
    std::vector<RunReport> reports;
    for (std::uint32_t i = 1; i <= reps; ++i) {
        reports.push_back(report(Strategy::monolithic, i, {call("monolithic", 1, 904)}, 6.0));
        reports.push_back(report(Strategy::static_decomposition, i, {call("S1", 1, 700), call("S2", 1, 600)}, 2.0));
        reports.push_back(report(Strategy::rstd, i, {call("S1", 1, 700), call("S2", 1, 600)}, 2.0));
        auto mono = report(Strategy::monolithic, i,
                           {call("monolithic", 1, 904, false, false, true), call("monolithic", 2, 904, true, true)}, 12.0);
        auto stat = report(Strategy::static_decomposition, i,
                           {call("S1", 1, 700), call("S2", 1, 600, false, false, true), call("S1", 2, 700, true, true),
                            call("S2", 2, 600, true, true)},
                           4.0);
        auto rs = report(Strategy::rstd, i,
                         {call("S1", 1, 700), call("S2", 1, 600, false, false, true), call("S2", 2, 600, true, true)},
                         3.0);
        for (auto* r : {&mono, &stat, &rs}) {
            r->injected = true;
            r->injection = "target=S2 attempt=1 mode=corrupt_response path=$.x";
            reports.push_back(*r);
        }
    }
    return reports;
}

TEST(Comparison, RetryDeltas) {
    const auto t = rstd::build_comparison(three_way(3));
    EXPECT_EQ(t.repetitions, 3u);
    ASSERT_EQ(t.columns.size(), 3u);
    EXPECT_EQ(t.columns[0].strategy, Strategy::monolithic);
    EXPECT_EQ(t.column(Strategy::rstd)->retry().mean, 600.0);
    EXPECT_EQ(t.column(Strategy::rstd)->clean.tokens.mean, 1300.0);
    EXPECT_NEAR(*t.retry_delta(Strategy::rstd, Strategy::monolithic), (600.0 - 904.0) / 904.0 * 100.0, 1e-9);
    EXPECT_NEAR(*t.retry_delta(Strategy::static_decomposition, Strategy::monolithic), (1300.0 - 904.0) / 904.0 * 100.0,
                1e-9);
}

TEST(Comparison, TextLayout) {
    const auto text = rstd::render_text(rstd::build_comparison(three_way(1)));
    for (const char* row : {"Tokens", "Latency s", "LLM API s", "Framework s", "LLM calls", "Correct", "Retry tokens"}) {
        EXPECT_NE(text.find(row), std::string::npos) << row;
    }
    EXPECT_NE(text.find("Mono."), std::string::npos);
    EXPECT_NE(text.find("904 ± 0"), std::string::npos);
    EXPECT_NE(text.find("rstd vs mono -33.6%"), std::string::npos) << text;
}

TEST(Comparison, CsvRows) {
    const auto csv = rstd::render_csv(rstd::build_comparison(three_way(2)));
    EXPECT_EQ(csv.rfind("pipeline,strategy,metric,mean,sd,n\n", 0), 0u);
    EXPECT_NE(csv.find("p,rstd,retry_tokens,600.000000,0.000000,2\n"), std::string::npos) << csv;
}

TEST(Records, RoundTripAndIndependentTotals) {
    const auto reports = three_way(2);
    std::stringstream stream;
    rstd::write_records(stream, reports);

    // Recompute totals from the raw lines without the library's reader.
    std::uint64_t independent = 0;
    std::uint64_t summary_total = 0;
    std::istringstream lines(stream.str());
    for (std::string line; std::getline(lines, line);) {
        const auto j = nlohmann::json::parse(line);
        if (j["record"] == "call") {
            independent += j["prompt_tokens"].get<std::uint64_t>() + j["completion_tokens"].get<std::uint64_t>();
        } else {
            summary_total += j["total_tokens"].get<std::uint64_t>();
        }
    }
    EXPECT_EQ(independent, summary_total);

    const auto back = rstd::read_records(stream);
    ASSERT_EQ(back.size(), reports.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].calls, reports[i].calls);
        EXPECT_EQ(back[i].total_tokens, reports[i].total_tokens);
        EXPECT_EQ(back[i].retry_tokens, reports[i].retry_tokens);
        EXPECT_EQ(back[i].strategy, reports[i].strategy);
        EXPECT_EQ(back[i].injected, reports[i].injected);
        EXPECT_DOUBLE_EQ(back[i].wall_seconds, reports[i].wall_seconds);
    }
    EXPECT_EQ(rstd::render_text(rstd::build_comparison(back)), rstd::render_text(rstd::build_comparison(reports)));
}

TEST(Records, MalformedStream) {
    std::istringstream bad("{\"record\":\"call\"}\nnot json\n");
    EXPECT_THROW(rstd::read_records(bad), rstd::ParseError);
}

}  // namespace
