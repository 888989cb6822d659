#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rstd/backend.hpp"
#include "rstd/engine.hpp"
#include "rstd/fault_injector.hpp"
#include "rstd/metrics.hpp"
#include "rstd/pipeline.hpp"

namespace rstd {

// Directory holding the bundled pipelines/ and mocks/. RSTD_ASSETS_DIR in the
// environment overrides the compiled-in location.
std::filesystem::path assets_dir();

// A pipeline reference is a file path or a bundled name ("uc1", "uc2").
std::filesystem::path resolve_pipeline(std::string_view ref);
PipelineSpec load_pipeline(std::string_view ref);

// "mock:<script>" where <script> is a file path or bundled name, or
// "http:<config.json>". Throws ParseError on an unknown scheme, ScriptError
// on a malformed script.
std::shared_ptr<Backend> make_backend(std::string_view ref);
bool is_mock_backend(std::string_view ref);

struct BenchPlan {
    std::string pipeline;
    std::vector<Strategy> strategies{Strategy::monolithic, Strategy::static_decomposition, Strategy::rstd};
    std::uint32_t repetitions = 10;
    std::optional<InjectionSpec> injection;
    std::string backend;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

// repetitions >= 1, strategies non-empty and distinct. Throws SpecError.
void check_plan(const BenchPlan& plan);

struct BenchResult {
    std::vector<RunReport> reports;  // strategy, run_index, clean before injected
    ComparisonTable table;
};

// Each repetition is one clean run, plus one injected run when the plan
// carries an injection. Runs under a mock backend use a virtual clock.
BenchResult run_bench(const BenchPlan& plan, const PipelineSpec& pipeline, const BackendRegistry& backends,
                      bool virtual_clock = true);

// records.jsonl, table.txt, table.csv.
void write_bench_outputs(const BenchResult& result, const std::filesystem::path& out_dir);

}  // namespace rstd
