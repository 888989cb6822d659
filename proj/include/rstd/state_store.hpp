#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "rstd/json_value.hpp"
#include "rstd/pipeline.hpp"

namespace rstd {

enum class SubtaskStatus { pending, completed, failed, skipped };

std::string to_string(SubtaskStatus status);

struct AttemptMeta {
    std::uint32_t attempts = 1;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
};

struct StateEntry {
    SubtaskStatus status = SubtaskStatus::pending;
    std::optional<JsonValue> value;
    std::uint32_t attempts = 0;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    // Set when the content signal was weak and no skip arc applied.
    bool low_content = false;
};

// How assemble_context treats sources that are not completed.
enum class ContextMode {
    // Required input unavailable -> MissingRequiredInput.
    gated,
    // Required input unavailable -> rendered as an explicit marker. Used by the
    // static strategy, which never reacts to upstream status. Failed values
    // are still never forwarded.
    ungated,
};

// Validated intermediate results for one run, keyed by subtask id. Only
// values that passed their schema are ever stored; failed attempts leave no
// trace a downstream reader could observe.
class StateStore {
public:
    StateStore() = default;
    explicit StateStore(const PipelineSpec& pipeline);

    // Throws AlreadyCompleted, UnknownSubtask, or InvalidTransition (failed or
    // skipped entries cannot be written without reopen()).
    void write_validated(std::string_view id, JsonValue value, const AttemptMeta& meta);

    // pending -> failed | skipped. Throws InvalidTransition.
    void mark(std::string_view id, SubtaskStatus status, std::uint32_t attempts = 0);

    // Returns a completed or failed entry to pending so a retry set can run it
    // again. The stored value is dropped; the attempt count is kept.
    void reopen(std::string_view id);

    // Counts a dispatched attempt against a pending entry; returns the new
    // attempt number. Throws InvalidTransition unless pending.
    std::uint32_t note_attempt(std::string_view id);

    void set_low_content(std::string_view id, bool flag);

    // Throws NotCompleted unless the entry is completed.
    const JsonValue& read(std::string_view id) const;

    // Throws UnknownSubtask.
    const StateEntry& entry(std::string_view id) const;
    SubtaskStatus status(std::string_view id) const { return entry(id).status; }

    const std::map<std::string, StateEntry, std::less<>>& entries() const noexcept { return entries_; }
    const std::map<std::string, std::string>& root_inputs() const noexcept { return root_inputs_; }

    // One record per entry: {subtask_id, status, attempts, tokens, value}.
    nlohmann::ordered_json snapshot(const PipelineSpec& pipeline) const;

private:
    StateEntry& mutable_entry(std::string_view id);

    std::map<std::string, StateEntry, std::less<>> entries_;
    std::map<std::string, std::string> root_inputs_;
};

inline constexpr std::string_view kUnavailableMarker = "<unavailable>";

// Declared inputs of `subtask`, serialized. Root inputs verbatim, subtask
// outputs as compact JSON. Optional inputs from non-completed sources are
// omitted. Nothing beyond the declared keys is returned.
std::map<std::string, std::string> assemble_context(const StateStore& store, const SubtaskSpec& subtask,
                                                    ContextMode mode = ContextMode::gated);

}  // namespace rstd
