#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rstd/backend.hpp"
#include "rstd/fault_injector.hpp"
#include "rstd/metrics.hpp"
#include "rstd/pipeline.hpp"
#include "rstd/schema.hpp"
#include "rstd/state_store.hpp"

namespace rstd {

struct RunConfig {
    Strategy strategy = Strategy::rstd;
    std::uint32_t repetitions = 1;
    std::uint64_t seed = 0;
    std::optional<InjectionSpec> injection;
    // 1-based index of this run within a bench; selects per-run mock entries.
    std::uint32_t run_index = 1;
};

enum class BranchKind { proceed, skip, retry, fail };

struct BranchDecision {
    BranchKind kind = BranchKind::proceed;
    std::vector<std::string> skip_targets;  // kind == skip
    bool low_content = false;               // kind == proceed, weak content, no skip arc

    bool operator==(const BranchDecision&) const = default;
};

// Branch signals over one subtask's current entry:
//   failed                         -> fail
//   pending after a failed attempt -> retry while attempts remain, else fail
//   completed, weak content        -> skip the nodes its skip arc bypasses,
//                                     or proceed with low_content set
//   completed                      -> proceed
BranchDecision evaluate_branch_signals(const StateEntry& entry, const SubtaskSpec& subtask,
                                       const PipelineSpec& pipeline);

// Ordered subtasks re-executed after a failure detected at `failed_at`.
// Throws UnknownSubtask.
std::vector<std::string> compute_retry_set(const PipelineSpec& pipeline, Strategy strategy,
                                           std::string_view failed_at);

// Single-prompt rendering of the whole task.
std::string compile_monolithic(const PipelineSpec& pipeline);

// The single-subtask schema, or an object keyed by subtask id.
SchemaNode monolithic_schema(const PipelineSpec& pipeline);

// Receives each call with the prompt sent and the raw text received (after
// any injection).
using CallObserver =
    std::function<void(const CallRecord& record, const std::string& prompt, const std::string& raw_output)>;

struct SubtaskResult {
    StateEntry entry;
    std::vector<CallRecord> calls;
};

// Validation-and-repair loop for one subtask: first attempt from the
// assembled context, later attempts from the repair prompt, up to
// max_repair_attempts. Writes the passing value or marks the entry failed.
// Throws MissingRequiredInput; TransportError aborts without consuming an
// attempt.
SubtaskResult execute_subtask(const PipelineSpec& pipeline, const SubtaskSpec& subtask, StateStore& store,
                              const BackendRegistry& backends, Clock& clock,
                              const std::optional<InjectionSpec>& injection = std::nullopt,
                              std::uint32_t run_index = 1, std::uint64_t seed = 0,
                              const CallObserver& observer = {});

struct RunResult {
    RunReport report;
    StateStore state;
};

// One run of `pipeline` under config.strategy. Hard failures are reported in
// the outcome; configuration errors (ScriptMiss, ScriptError, PathNotFound)
// and TransportError propagate.
RunResult execute_run(const PipelineSpec& pipeline, const RunConfig& config, const BackendRegistry& backends,
                      Clock& clock, const CallObserver& observer = {});

RunReport run(const PipelineSpec& pipeline, const RunConfig& config, const BackendRegistry& backends, Clock& clock,
              const CallObserver& observer = {});

// Ground-truth check over a finished store. True when the pipeline declares
// no ground truth.
bool check_correct(const PipelineSpec& pipeline, const StateStore& store);

}  // namespace rstd
