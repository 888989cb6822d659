#pragma once

#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rstd/backend.hpp"
#include "rstd/bench.hpp"
#include "rstd/engine.hpp"
#include "rstd/errors.hpp"
#include "rstd/pipeline.hpp"

namespace rstd::testing {

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline PipelineSpec bundled(const std::string& name) { return load_pipeline(name); }

inline MockScript bundled_script(const std::string& name) {
    return MockScript::parse(slurp(assets_dir() / "mocks" / (name + ".json")));
}

inline BackendRegistry registry(MockScript script) {
    return BackendRegistry(std::make_shared<MockBackend>(std::move(script)));
}

inline BackendRegistry bundled_registry(const std::string& name) { return registry(bundled_script(name)); }

inline InjectionSpec inject(std::string target, std::uint32_t attempt, InjectionMode mode, const std::string& path) {
    return InjectionSpec{std::move(target), attempt, mode, ValuePath::parse(path)};
}

// Random DAG over n nodes "N0".."N{n-1}": edges only go from lower to higher
// index, so declaration order is one valid topological order.
struct RandomDag {
    std::size_t n = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
};

inline RandomDag random_dag(std::mt19937_64& rng, std::size_t max_nodes, double density = 0.35) {
    RandomDag dag;
    dag.n = std::uniform_int_distribution<std::size_t>(1, max_nodes)(rng);
    std::bernoulli_distribution coin(density);
    for (std::size_t i = 0; i < dag.n; ++i) {
        for (std::size_t j = i + 1; j < dag.n; ++j) {
            if (coin(rng)) {
                dag.edges.emplace_back(i, j);
            }
        }
    }
    return dag;
}

inline std::string node_id(std::size_t i) { return fmt::format("N{}", i); }

// Pipeline over `dag` in which every subtask consumes each direct
// predecessor's output as a required input and returns {"v": number}.
inline PipelineSpec pipeline_from(const RandomDag& dag) {
    PipelineSpec p;
    p.id = "random";
    p.root_inputs["seed"] = "x";
    for (std::size_t i = 0; i < dag.n; ++i) {
        SubtaskSpec s;
        s.id = node_id(i);
        s.name = s.id;
        s.model_ref = "default";
        s.prompt_template = "task " + s.id;
        bool has_pred = false;
        for (const auto& [a, b] : dag.edges) {
            if (b == i) {
                s.input_keys.push_back({"in_" + node_id(a), node_id(a), true});
                s.prompt_template += " {in_" + node_id(a) + "}";
                has_pred = true;
            }
        }
        if (!has_pred) {
            s.input_keys.push_back({"seed", std::string(kRootSource), true});
            s.prompt_template += " {seed}";
        }
        SchemaNode number;
        number.kind = SchemaKind::number;
        s.output_schema.kind = SchemaKind::object;
        s.output_schema.properties.emplace_back("v", number);
        s.output_schema.required.push_back("v");
        p.subtasks.push_back(std::move(s));
    }
    for (const auto& [a, b] : dag.edges) {
        p.edges.push_back({node_id(a), node_id(b), false});
    }
    return p;
}

// Reachability by enumerating every path from `from` (exponential; fine for
// the small graphs used here).
inline std::set<std::string> reachable_by_paths(const RandomDag& dag, std::size_t from) {
    std::set<std::string> seen;
    std::vector<std::vector<std::size_t>> stack{{from}};
    while (!stack.empty()) {
        auto path = stack.back();
        stack.pop_back();
        for (const auto& [a, b] : dag.edges) {
            if (a == path.back()) {
                seen.insert(node_id(b));
                auto longer = path;
                longer.push_back(b);
                stack.push_back(std::move(longer));
            }
        }
    }
    return seen;
}

// Same oracle over a pipeline's declared edges.
inline std::set<std::string> reachable_by_paths(const PipelineSpec& p, const std::string& from) {
    std::set<std::string> seen;
    std::vector<std::vector<std::string>> stack{{from}};
    while (!stack.empty()) {
        auto path = stack.back();
        stack.pop_back();
        for (const auto& e : p.edges) {
            if (e.from == path.back()) {
                seen.insert(e.to);
                auto longer = path;
                longer.push_back(e.to);
                stack.push_back(std::move(longer));
            }
        }
    }
    return seen;
}

// One randomized gating trial: a random pipeline whose chosen subtask never
// produces valid output runs under rstd. Returns every violation found: a call
// below the failed subtask, a readable failed entry, or its raw output in
// another subtask's prompt.
inline std::vector<std::string> gating_violations(std::mt19937_64& rng, std::size_t max_nodes) {
    const auto dag = random_dag(rng, max_nodes);
    const auto p = pipeline_from(dag);
    const auto failing = node_id(std::uniform_int_distribution<std::size_t>(0, dag.n - 1)(rng));
    const auto raw = [&](std::uint32_t a) { return fmt::format("RAW-{}-{}", failing, a); };
    std::vector<MockEntry> entries;
    for (std::size_t i = 0; i < dag.n; ++i) {
        const auto id = node_id(i);
        if (id == failing) {
            for (std::uint32_t a = 1; a <= kDefaultMaxRepairAttempts; ++a) {
                entries.push_back({id, a, fmt::format(R"({{"v":"{}"}})", raw(a))});
            }
        } else {
            entries.push_back({id, 1, fmt::format(R"({{"v":{}}})", i)});
        }
    }

    std::vector<std::string> violations;
    const auto observer = [&](const CallRecord& r, const std::string& prompt, const std::string&) {
        if (r.subtask == failing) {
            return;
        }
        for (std::uint32_t a = 1; a <= kDefaultMaxRepairAttempts; ++a) {
            if (prompt.find(raw(a)) != std::string::npos) {
                violations.push_back(r.subtask + " prompt carries " + raw(a));
            }
        }
    };
    RunConfig config;
    config.strategy = Strategy::rstd;
    VirtualClock clock;
    const auto result = execute_run(p, config, registry(MockScript(entries)), clock, observer);

    if (result.report.outcome != RunOutcome::hard_failure) {
        violations.push_back("run did not hard-fail");
    }
    try {
        (void)result.state.read(failing);
        violations.push_back("failed " + failing + " is readable");
    } catch (const NotCompleted&) {
    }
    const auto downstream = downstream_closure(p, failing);
    for (const auto& c : result.report.calls) {
        if (downstream.contains(c.subtask)) {
            violations.push_back(c.subtask + " ran below failed " + failing);
        }
    }
    return violations;
}

}  // namespace rstd::testing
