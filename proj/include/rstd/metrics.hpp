#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rstd/pipeline.hpp"

namespace rstd {

// One model call. Emitted for every attempt, passing or not.
struct CallRecord {
    std::uint32_t run_index = 1;
    std::string subtask;  // subtask id or "monolithic"
    std::uint32_t attempt = 1;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    double model_latency = 0.0;
    // Orchestration time since the previous call completed, plus parse and
    // validation of this call's output.
    double framework_latency = 0.0;
    bool validation_passed = false;
    bool retry_flag = false;
    bool injection_applied = false;

    std::uint64_t tokens() const noexcept { return prompt_tokens + completion_tokens; }
    bool operator==(const CallRecord&) const = default;
};

enum class RunOutcome { success, hard_failure };

std::string to_string(RunOutcome outcome);

struct RunReport {
    std::string pipeline_id;
    Strategy strategy = Strategy::rstd;
    std::uint32_t run_index = 1;
    // Whether this run carried a fault injection; `injection` describes it.
    bool injected = false;
    std::string injection;
    std::vector<CallRecord> calls;
    std::uint64_t total_tokens = 0;
    std::uint64_t retry_tokens = 0;
    double wall_seconds = 0.0;
    double model_seconds = 0.0;
    double framework_seconds = 0.0;
    RunOutcome outcome = RunOutcome::success;
    bool correct = false;
    std::string error;
    nlohmann::ordered_json state = nlohmann::ordered_json::array();

    // Tokens of calls that are not retry-attributed.
    std::uint64_t baseline_tokens() const noexcept { return total_tokens - retry_tokens; }

    // Recomputes the token and latency totals from `calls` and `wall_seconds`.
    void finalize();
};

std::uint64_t retry_tokens(const RunReport& report);

// wall_seconds - sum of model latency.
double measure_framework_overhead(const RunReport& report);
// overhead / wall; 0 when wall is 0.
double framework_fraction(const RunReport& report);

// Natural schema-failure rate of `subtask`: failed first-pass attempts over
// first-pass attempts. Retry-attributed attempts are recovery cost, not
// executions, and injected attempts never count as failures.
double failure_rate(const std::vector<RunReport>& reports, std::string_view subtask);

struct SampleStats {
    double mean = 0.0;
    double sd = 0.0;  // sample (n - 1) deviation; 0 for n < 2
    std::size_t n = 0;
};

// Single pass (Welford).
SampleStats summarize(std::span<const double> samples);

struct AggregateTable {
    std::string pipeline_id;
    Strategy strategy = Strategy::rstd;
    std::size_t runs = 0;
    SampleStats tokens;  // baseline tokens
    SampleStats total_tokens;
    SampleStats wall_seconds;
    SampleStats model_seconds;
    SampleStats framework_seconds;
    SampleStats calls;
    SampleStats retry_tokens;
    double correct_fraction = 0.0;
    std::size_t hard_failures = 0;
};

// Throws MixedConfig when reports differ in pipeline or strategy, Error when
// empty.
AggregateTable aggregate(const std::vector<RunReport>& reports);

// Three-way comparison: one column per strategy, clean and injected.
struct StrategyColumn {
    Strategy strategy = Strategy::rstd;
    AggregateTable clean;
    std::optional<AggregateTable> injected;
    double correct_fraction = 0.0;  // over clean and injected runs

    const SampleStats& retry() const { return injected ? injected->retry_tokens : clean.retry_tokens; }
};

struct ComparisonTable {
    std::string pipeline_id;
    std::string injection;
    std::size_t repetitions = 0;
    std::vector<StrategyColumn> columns;  // monolithic, static, rstd order
    bool partial = false;                 // some run hard-failed

    const StrategyColumn* column(Strategy s) const;
    // Percent change of mean retry tokens, (a - b) / b * 100.
    std::optional<double> retry_delta(Strategy a, Strategy b) const;
};

// Groups by strategy. Every report must share one pipeline (MixedConfig).
ComparisonTable build_comparison(const std::vector<RunReport>& reports);
std::string render_text(const ComparisonTable& table);
std::string render_csv(const ComparisonTable& table);

// Run-record stream: one JSON line per CallRecord followed by one run-summary
// line, per run.
nlohmann::ordered_json call_to_json(const CallRecord& call);
nlohmann::ordered_json run_summary_to_json(const RunReport& report);
void write_records(std::ostream& out, const RunReport& report);
void write_records(std::ostream& out, const std::vector<RunReport>& reports);
// Rebuilds reports; totals are recomputed from the call lines. Throws ParseError.
std::vector<RunReport> read_records(std::istream& in);

}  // namespace rstd
