#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include "rstd/bench.hpp"
#include "rstd/engine.hpp"
#include "rstd/errors.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitHardFailure = 3;
constexpr int kExitTransport = 4;

std::optional<rstd::InjectionSpec> injection_from(const std::vector<std::string>& tokens) {
    if (tokens.empty()) {
        return std::nullopt;
    }
    return rstd::parse_injection(tokens);
}

rstd::BackendRegistry registry_for(const std::string& backend) {
    return rstd::BackendRegistry(rstd::make_backend(backend));
}

int cmd_validate(const std::string& path) {
    try {
        const auto pipeline = rstd::load_pipeline(path);
        std::cout << "valid\n";
        return kExitOk;
    } catch (const rstd::CycleError& e) {
        fmt::print(std::cerr, "error: cycle: {}\n", fmt::join(e.cycle(), " -> "));
    } catch (const rstd::SpecError& e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
    }
    return kExitConfig;
}

struct RunArgs {
    std::string pipeline;
    std::string strategy = "rstd";
    std::string backend;
    std::vector<std::string> inject;
    std::uint64_t seed = 0;
    std::uint32_t run_index = 1;
    std::string records;
    std::string clock;  // virtual for mock backends, real otherwise
};

int cmd_run(const RunArgs& a) {
    const auto pipeline = rstd::load_pipeline(a.pipeline);
    rstd::RunConfig config;
    config.strategy = rstd::parse_strategy(a.strategy);
    config.seed = a.seed;
    config.run_index = a.run_index;
    config.injection = injection_from(a.inject);
    const auto backends = registry_for(a.backend);

    std::unique_ptr<rstd::Clock> clock;
    if (a.clock == "virtual" || (a.clock.empty() && rstd::is_mock_backend(a.backend))) {
        clock = std::make_unique<rstd::VirtualClock>();
    } else {
        clock = std::make_unique<rstd::SteadyClock>();
    }
    const auto report = rstd::run(pipeline, config, backends, *clock);

    if (a.records.empty()) {
        rstd::write_records(std::cout, report);
    } else {
        std::ofstream out(a.records, std::ios::binary);
        rstd::write_records(out, report);
    }
    fmt::print(std::cerr, "{} {} run {}: {} calls, {} tokens, {} retry tokens, {:.3f}s wall, outcome {}{}\n",
               report.pipeline_id, rstd::to_string(report.strategy), report.run_index, report.calls.size(),
               report.total_tokens, report.retry_tokens, report.wall_seconds, rstd::to_string(report.outcome),
               report.error.empty() ? "" : " (" + report.error + ")");
    return report.outcome == rstd::RunOutcome::success ? kExitOk : kExitHardFailure;
}

struct BenchArgs {
    std::string pipeline;
    std::vector<std::string> strategies{"monolithic", "static", "rstd"};
    std::uint32_t repetitions = 10;
    std::string backend;
    std::vector<std::string> inject;
    std::uint64_t seed = 0;
    std::string out_dir = "bench-out";
    unsigned jobs = 1;
};

int cmd_bench(const BenchArgs& a) {
    rstd::BenchPlan plan;
    plan.pipeline = a.pipeline;
    plan.strategies.clear();
    for (const auto& s : a.strategies) {
        plan.strategies.push_back(rstd::parse_strategy(s));
    }
    plan.repetitions = a.repetitions;
    plan.injection = injection_from(a.inject);
    plan.backend = a.backend;
    plan.seed = a.seed;
    plan.jobs = a.jobs;

    const auto pipeline = rstd::load_pipeline(plan.pipeline);
    const auto result = rstd::run_bench(plan, pipeline, registry_for(plan.backend), rstd::is_mock_backend(a.backend));
    rstd::write_bench_outputs(result, a.out_dir);
    std::cout << rstd::render_text(result.table);
    return result.table.partial ? kExitHardFailure : kExitOk;
}

int cmd_report(const std::string& path, bool csv) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw rstd::ParseError("cannot read " + path);
    }
    const auto table = rstd::build_comparison(rstd::read_records(in));
    std::cout << (csv ? rstd::render_csv(table) : rstd::render_text(table));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Runtime-structured task decomposition: run and benchmark subtask pipelines"};
    app.require_subcommand(1);

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Check a pipeline config");
    validate->add_option("pipeline", validate_path, "Config path or bundled name")->required();

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Execute one run and emit its record stream");
    run_cmd->add_option("--pipeline", run.pipeline)->required();
    run_cmd->add_option("--strategy", run.strategy)->check(CLI::IsMember({"monolithic", "static", "rstd"}));
    run_cmd->add_option("--backend", run.backend, "mock:<script> or http:<config>")->required();
    run_cmd->add_option("--inject", run.inject, "target=.. attempt=.. mode=.. path=..")->expected(1, 4);
    run_cmd->add_option("--seed", run.seed);
    run_cmd->add_option("--run-index", run.run_index)->check(CLI::PositiveNumber);
    run_cmd->add_option("--records", run.records, "Write records here instead of stdout");
    run_cmd->add_option("--clock", run.clock)->check(CLI::IsMember({"virtual", "real"}));

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Run repetitions per strategy and write comparison tables");
    bench_cmd->add_option("--pipeline", bench.pipeline)->required();
    bench_cmd->add_option("--strategies", bench.strategies)->delimiter(',');
    bench_cmd->add_option("--repetitions", bench.repetitions)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--backend", bench.backend)->required();
    bench_cmd->add_option("--inject", bench.inject)->expected(1, 4);
    bench_cmd->add_option("--seed", bench.seed);
    bench_cmd->add_option("--out-dir", bench.out_dir);
    bench_cmd->add_option("--jobs", bench.jobs)->check(CLI::PositiveNumber);

    std::string report_path;
    bool report_csv = false;
    auto* report = app.add_subcommand("report", "Re-render tables from a record stream");
    report->add_option("records", report_path)->required();
    report->add_flag("--csv", report_csv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*validate) {
            return cmd_validate(validate_path);
        }
        if (*run_cmd) {
            return cmd_run(run);
        }
        if (*bench_cmd) {
            return cmd_bench(bench);
        }
        return cmd_report(report_path, report_csv);
    } catch (const rstd::TransportError& e) {
        fmt::print(std::cerr, "transport error: {}\n", e.what());
        return kExitTransport;
    } catch (const std::exception& e) {
        fmt::print(std::cerr, "error: {}\n", e.what());
        return kExitConfig;
    }
}
