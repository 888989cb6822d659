#include <fstream>

#include <gtest/gtest.h>

#include "rstd/bench.hpp"
#include "rstd/errors.hpp"
#include "test_support.hpp"

namespace {

using rstd::Strategy;

rstd::BenchPlan plan_for(const std::string& name, std::uint32_t reps, std::optional<rstd::InjectionSpec> injection) {
    rstd::BenchPlan plan;
    plan.pipeline = name;
    plan.backend = "mock:" + name;
    plan.repetitions = reps;
    plan.injection = std::move(injection);
    return plan;
}

rstd::BenchResult bench(const rstd::BenchPlan& plan) {
    const auto pipeline = rstd::load_pipeline(plan.pipeline);
    return rstd::run_bench(plan, pipeline, rstd::BackendRegistry(rstd::make_backend(plan.backend)));
}

double mean_retry(const rstd::ComparisonTable& t, Strategy s) { return t.column(s)->retry().mean; }

const auto kUc2 = rstd::testing::inject("S3", 1, rstd::InjectionMode::corrupt_response, "$.root_cause");
const auto kUc1 = rstd::testing::inject("A3", 1, rstd::InjectionMode::corrupt_response, "$.verdict");

TEST(RunBench, Uc2RetryDeltas) {
    const auto result = bench(plan_for("uc2", 10, kUc2));
    EXPECT_EQ(result.reports.size(), 60u);
    const auto& t = result.table;
    EXPECT_FALSE(t.partial);
    EXPECT_EQ(mean_retry(t, Strategy::monolithic), 904.0);
    EXPECT_EQ(mean_retry(t, Strategy::static_decomposition), 1416.0);
    EXPECT_EQ(mean_retry(t, Strategy::rstd), 436.0);
    EXPECT_EQ(t.column(Strategy::rstd)->clean.tokens.mean, 2716.0);
    EXPECT_NEAR(*t.retry_delta(Strategy::rstd, Strategy::monolithic), -51.8, 0.05);
    EXPECT_NEAR(*t.retry_delta(Strategy::rstd, Strategy::static_decomposition), -69.2, 0.05);
}

TEST(RunBench, Uc1Ordering) {
    const auto t = bench(plan_for("uc1", 3, kUc1)).table;
    EXPECT_LT(mean_retry(t, Strategy::rstd), mean_retry(t, Strategy::monolithic));
    EXPECT_LT(mean_retry(t, Strategy::monolithic), mean_retry(t, Strategy::static_decomposition));
    EXPECT_EQ(t.column(Strategy::rstd)->clean.calls.mean, 4.0);
    EXPECT_EQ(t.column(Strategy::monolithic)->clean.calls.mean, 1.0);
}

TEST(RunBench, SingleRepetitionHasZeroDeviation) {
    const auto t = bench(plan_for("uc2", 1, kUc2)).table;
    for (const auto& c : t.columns) {
        EXPECT_EQ(c.clean.runs, 1u);
        EXPECT_EQ(c.clean.wall_seconds.sd, 0.0);
        EXPECT_EQ(c.retry().sd, 0.0);
    }
}

TEST(RunBench, CleanOnlyBenchHasNoRetryCost) {
    const auto t = bench(plan_for("uc2", 2, std::nullopt)).table;
    for (const auto& c : t.columns) {
        EXPECT_FALSE(c.injected.has_value());
        EXPECT_EQ(c.retry().mean, 0.0);
    }
    EXPECT_FALSE(t.retry_delta(Strategy::rstd, Strategy::monolithic).has_value());
}

TEST(RunBench, ParallelRunsMatchSerial) {
    auto plan = plan_for("uc2", 4, kUc2);
    const auto serial = bench(plan);
    plan.jobs = 4;
    const auto parallel = bench(plan);
    ASSERT_EQ(serial.reports.size(), parallel.reports.size());
    for (std::size_t i = 0; i < serial.reports.size(); ++i) {
        EXPECT_EQ(serial.reports[i].calls, parallel.reports[i].calls);
    }
    EXPECT_EQ(rstd::render_text(serial.table), rstd::render_text(parallel.table));
}

TEST(RunBench, NaturalFailureRate) {
    auto plan = plan_for("uc2", 100, std::nullopt);
    plan.backend = "mock:uc2-natural";
    plan.strategies = {Strategy::rstd};
    const auto result = bench(plan);
    EXPECT_DOUBLE_EQ(rstd::failure_rate(result.reports, "S2"), 0.02);
    EXPECT_EQ(rstd::failure_rate(result.reports, "S1"), 0.0);

    auto uc1 = plan_for("uc1", 20, kUc1);
    uc1.strategies = {Strategy::rstd};
    const auto clean = bench(uc1);
    for (const char* id : {"A1", "A2", "A3", "A4"}) {
        EXPECT_EQ(rstd::failure_rate(clean.reports, id), 0.0) << id;
    }
}

TEST(WriteBenchOutputs, FilesRoundTrip) {
    const auto result = bench(plan_for("uc1", 2, kUc1));
    const auto dir = std::filesystem::temp_directory_path() / "rstd_bench_outputs";
    std::filesystem::remove_all(dir);
    rstd::write_bench_outputs(result, dir);
    EXPECT_EQ(rstd::testing::slurp(dir / "table.txt"), rstd::render_text(result.table));
    EXPECT_EQ(rstd::testing::slurp(dir / "table.csv"), rstd::render_csv(result.table));
    std::ifstream in(dir / "records.jsonl");
    const auto back = rstd::read_records(in);
    ASSERT_EQ(back.size(), result.reports.size());
    EXPECT_EQ(rstd::render_text(rstd::build_comparison(back)), rstd::render_text(result.table));
    std::filesystem::remove_all(dir);
}

TEST(CheckPlan, Rejections) {
    auto plan = plan_for("uc2", 0, std::nullopt);
    EXPECT_THROW(rstd::check_plan(plan), rstd::SpecError);
    plan.repetitions = 1;
    plan.strategies = {};
    EXPECT_THROW(rstd::check_plan(plan), rstd::SpecError);
    plan.strategies = {Strategy::rstd, Strategy::rstd};
    EXPECT_THROW(rstd::check_plan(plan), rstd::SpecError);
    plan.strategies = {Strategy::rstd};
    EXPECT_NO_THROW(rstd::check_plan(plan));
}

TEST(MakeBackend, References) {
    EXPECT_TRUE(rstd::is_mock_backend("mock:uc2"));
    EXPECT_FALSE(rstd::is_mock_backend("http:cfg.json"));
    EXPECT_THROW(rstd::make_backend("grpc:x"), rstd::ParseError);
    EXPECT_THROW(rstd::make_backend("mock:/nonexistent/script.json"), rstd::Error);
    EXPECT_THROW(rstd::load_pipeline("/nonexistent/pipeline.json"), rstd::Error);
}

}  // namespace
