#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rstd/json_value.hpp"
#include "rstd/schema.hpp"

namespace rstd {

inline constexpr std::string_view kRootSource = "root";
inline constexpr std::string_view kMonolithicKey = "monolithic";
inline constexpr std::uint32_t kDefaultMaxRepairAttempts = 3;

enum class Strategy { monolithic, static_decomposition, rstd };

std::string to_string(Strategy strategy);
// Accepts "monolithic", "static", "rstd". Throws ParseError.
Strategy parse_strategy(std::string_view text);

struct InputKey {
    std::string key;
    std::string source;  // subtask id or "root"
    bool required = true;

    bool from_root() const { return source == kRootSource; }
    bool operator==(const InputKey&) const = default;
};

// Resolved policy; every field populated.
struct FailurePolicy {
    std::uint32_t max_repair_attempts = kDefaultMaxRepairAttempts;
    std::vector<std::string> rstd_retry_set;
    std::vector<std::string> static_retry_set;

    bool operator==(const FailurePolicy&) const = default;
};

// As written in the config; absent members fall back to defaults.
struct FailurePolicyConfig {
    std::optional<std::uint32_t> max_repair_attempts;
    std::optional<std::vector<std::string>> rstd_retry_set;
    std::optional<std::vector<std::string>> static_retry_set;

    bool operator==(const FailurePolicyConfig&) const = default;
};

struct SubtaskSpec {
    std::string id;
    std::string name;
    std::string prompt_template;
    std::vector<InputKey> input_keys;
    SchemaNode output_schema;
    std::optional<ValuePath> confidence_path;
    std::optional<double> confidence_threshold;
    std::string model_ref;
    std::optional<FailurePolicyConfig> failure_policy;

    const InputKey* input(std::string_view key) const;
    bool operator==(const SubtaskSpec&) const = default;
};

struct Edge {
    std::string from;  // subtask id or "root"
    std::string to;
    bool skip_arc = false;

    bool operator==(const Edge&) const = default;
};

// Final-output check used for the correctness column: the string at `path`
// in `subtask`'s accepted output contains `expected` (case-insensitive).
struct GroundTruth {
    std::string subtask;
    ValuePath path;
    std::string expected;

    bool operator==(const GroundTruth&) const = default;
};

struct PipelineSpec {
    std::string id;
    std::vector<SubtaskSpec> subtasks;
    std::vector<Edge> edges;
    std::map<std::string, std::string> root_inputs;
    std::optional<std::string> monolithic_prompt;
    std::optional<GroundTruth> ground_truth;

    const SubtaskSpec* find(std::string_view id) const;
    // Throws UnknownSubtask.
    const SubtaskSpec& at(std::string_view id) const;
    std::size_t index_of(std::string_view id) const;

    bool operator==(const PipelineSpec&) const = default;
};

// Parses and validates a pipeline-config document. Throws ParseError,
// SpecError (with a field path), or CycleError.
PipelineSpec parse_pipeline(std::string_view document);
std::string serialize_pipeline(const PipelineSpec& pipeline);

// Checks every PipelineSpec invariant; what parse_pipeline runs after reading.
void check_pipeline(const PipelineSpec& pipeline);

// Kahn's algorithm; among ready nodes the earliest declared goes first.
std::vector<std::string> topological_order(const PipelineSpec& pipeline);

// Every subtask reachable from `id`, excluding `id`.
std::set<std::string> downstream_closure(const PipelineSpec& pipeline, std::string_view id);

// Ancestors of `id` (reverse reachability), excluding `id`.
std::set<std::string> upstream_closure(const PipelineSpec& pipeline, std::string_view id);

FailurePolicy resolve_failure_policy(const PipelineSpec& pipeline, std::string_view id);

// Direct successors of `id` that a skip arc from `id` bypasses, i.e. those
// that still reach the skip arc's destination. Empty when `id` has no skip arc.
std::vector<std::string> skip_targets(const PipelineSpec& pipeline, std::string_view id);

// `{name}` placeholders in declaration order, duplicates removed. `{{` and
// `}}` are literal braces.
std::vector<std::string> placeholders(std::string_view prompt_template);

// Substitutes placeholders from `context`; names missing from it are left as
// written.
std::string render_template(std::string_view prompt_template, const std::map<std::string, std::string>& context);

// Sorts ids by their position in topological order.
std::vector<std::string> in_topological_order(const PipelineSpec& pipeline, const std::set<std::string>& ids);

}  // namespace rstd
