#include "rstd/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "rstd/errors.hpp"

#ifndef RSTD_ASSETS_DIR
#define RSTD_ASSETS_DIR "assets"
#endif

namespace rstd {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Existing file paths win over bundled names.
std::filesystem::path resolve_asset(std::string_view ref, const char* kind) {
    std::filesystem::path direct(ref);
    if (std::filesystem::is_regular_file(direct)) {
        return direct;
    }
    auto bundled = assets_dir() / kind / (std::string(ref) + ".json");
    if (std::filesystem::is_regular_file(bundled)) {
        return bundled;
    }
    // "uc2-script" names the bundled uc2 mock.
    if (std::string_view(kind) == "mocks" && ref.ends_with("-script")) {
        bundled = assets_dir() / kind / (std::string(ref.substr(0, ref.size() - 7)) + ".json");
        if (std::filesystem::is_regular_file(bundled)) {
            return bundled;
        }
    }
    throw ParseError(std::string("no such file or bundled ") + kind + ": " + std::string(ref));
}

}  // namespace

std::filesystem::path assets_dir() {
    if (const char* env = std::getenv("RSTD_ASSETS_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return RSTD_ASSETS_DIR;
}

std::filesystem::path resolve_pipeline(std::string_view ref) { return resolve_asset(ref, "pipelines"); }

PipelineSpec load_pipeline(std::string_view ref) { return parse_pipeline(read_file(resolve_pipeline(ref))); }

bool is_mock_backend(std::string_view ref) { return ref.starts_with("mock:"); }

std::shared_ptr<Backend> make_backend(std::string_view ref) {
    if (ref.starts_with("mock:")) {
        const auto path = resolve_asset(ref.substr(5), "mocks");
        return std::make_shared<MockBackend>(MockScript::parse(read_file(path)));
    }
    if (ref.starts_with("http:")) {
        return std::make_shared<HttpBackend>(HttpConfig::parse(read_file(std::filesystem::path(ref.substr(5)))));
    }
    throw ParseError("backend must be mock:<script> or http:<config>, got '" + std::string(ref) + "'");
}

void check_plan(const BenchPlan& plan) {
    if (plan.repetitions < 1) {
        throw SpecError("repetitions", "must be at least 1");
    }
    if (plan.strategies.empty()) {
        throw SpecError("strategies", "must not be empty");
    }
    auto sorted = plan.strategies;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw SpecError("strategies", "must not repeat");
    }
}

BenchResult run_bench(const BenchPlan& plan, const PipelineSpec& pipeline, const BackendRegistry& backends,
                      bool virtual_clock) {
    check_plan(plan);
    if (plan.injection) {
        check_injection(*plan.injection, pipeline);
    }

    std::vector<RunConfig> configs;
    for (const auto strategy : plan.strategies) {
        for (std::uint32_t r = 1; r <= plan.repetitions; ++r) {
            RunConfig c;
            c.strategy = strategy;
            c.seed = plan.seed;
            c.run_index = r;
            configs.push_back(c);
            if (plan.injection) {
                c.injection = plan.injection;
                configs.push_back(c);
            }
        }
    }

    std::vector<RunReport> reports(configs.size());
    std::vector<std::exception_ptr> errors(configs.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                std::unique_ptr<Clock> clock;
                if (virtual_clock) {
                    clock = std::make_unique<VirtualClock>();
                } else {
                    clock = std::make_unique<SteadyClock>();
                }
                reports[i] = run(pipeline, configs[i], backends, *clock);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(plan.jobs, static_cast<unsigned>(configs.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) {
            pool.emplace_back(worker);
        }
    }
    // Report the first failure in plan order, regardless of scheduling.
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    BenchResult result;
    result.table = build_comparison(reports);
    result.reports = std::move(reports);
    return result;
}

void write_bench_outputs(const BenchResult& result, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(out_dir / name, std::ios::binary);
        if (!out) {
            throw Error("cannot write " + (out_dir / name).string());
        }
        out << text;
    };
    std::ostringstream records;
    write_records(records, result.reports);
    write("records.jsonl", records.str());
    write("table.txt", render_text(result.table));
    write("table.csv", render_csv(result.table));
}

}  // namespace rstd
