#include "rstd/state_store.hpp"

#include "rstd/errors.hpp"

namespace rstd {

std::string to_string(SubtaskStatus status) {
    switch (status) {
        case SubtaskStatus::pending: return "pending";
        case SubtaskStatus::completed: return "completed";
        case SubtaskStatus::failed: return "failed";
        case SubtaskStatus::skipped: return "skipped";
    }
    return "unknown";
}

StateStore::StateStore(const PipelineSpec& pipeline) : root_inputs_(pipeline.root_inputs) {
    for (const auto& s : pipeline.subtasks) {
        entries_.emplace(s.id, StateEntry{});
    }
}

StateEntry& StateStore::mutable_entry(std::string_view id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
        throw UnknownSubtask(std::string(id));
    }
    return it->second;
}

const StateEntry& StateStore::entry(std::string_view id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
        throw UnknownSubtask(std::string(id));
    }
    return it->second;
}

void StateStore::write_validated(std::string_view id, JsonValue value, const AttemptMeta& meta) {
    auto& e = mutable_entry(id);
    if (e.status == SubtaskStatus::completed) {
        throw AlreadyCompleted(std::string(id));
    }
    if (e.status != SubtaskStatus::pending) {
        throw InvalidTransition("cannot complete '" + std::string(id) + "' from status " + to_string(e.status));
    }
    if (meta.attempts < 1) {
        throw InvalidTransition("completed entry for '" + std::string(id) + "' needs at least one attempt");
    }
    e.value = std::move(value);
    e.attempts = meta.attempts;
    e.prompt_tokens = meta.prompt_tokens;
    e.completion_tokens = meta.completion_tokens;
    e.status = SubtaskStatus::completed;
}

void StateStore::mark(std::string_view id, SubtaskStatus status, std::uint32_t attempts) {
    auto& e = mutable_entry(id);
    if (status != SubtaskStatus::failed && status != SubtaskStatus::skipped) {
        throw InvalidTransition("mark() only records failed or skipped");
    }
    if (e.status != SubtaskStatus::pending) {
        throw InvalidTransition("cannot mark '" + std::string(id) + "' " + to_string(status) + " from status " +
                                to_string(e.status));
    }
    if (status == SubtaskStatus::failed && attempts < 1) {
        throw InvalidTransition("failed entry for '" + std::string(id) + "' needs at least one attempt");
    }
    e.status = status;
    e.value.reset();
    if (attempts > 0) {
        e.attempts = attempts;
    }
}

void StateStore::reopen(std::string_view id) {
    auto& e = mutable_entry(id);
    if (e.status == SubtaskStatus::skipped) {
        throw InvalidTransition("cannot reopen skipped subtask '" + std::string(id) + "'");
    }
    e.status = SubtaskStatus::pending;
    e.value.reset();
    e.low_content = false;
}

std::uint32_t StateStore::note_attempt(std::string_view id) {
    auto& e = mutable_entry(id);
    if (e.status != SubtaskStatus::pending) {
        throw InvalidTransition("cannot attempt '" + std::string(id) + "' in status " + to_string(e.status));
    }
    return ++e.attempts;
}

void StateStore::set_low_content(std::string_view id, bool flag) { mutable_entry(id).low_content = flag; }

const JsonValue& StateStore::read(std::string_view id) const {
    auto it = entries_.find(id);
    if (it == entries_.end() || it->second.status != SubtaskStatus::completed) {
        throw NotCompleted(std::string(id));
    }
    return *it->second.value;
}

nlohmann::ordered_json StateStore::snapshot(const PipelineSpec& pipeline) const {
    auto out = nlohmann::ordered_json::array();
    for (const auto& s : pipeline.subtasks) {
        const auto& e = entry(s.id);
        nlohmann::ordered_json rec;
        rec["subtask_id"] = s.id;
        rec["status"] = to_string(e.status);
        rec["attempts"] = e.attempts;
        rec["tokens"] = e.prompt_tokens + e.completion_tokens;
        rec["value"] = e.value ? nlohmann::ordered_json(*e.value) : nlohmann::ordered_json(nullptr);
        if (e.low_content) {
            rec["low_content"] = true;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::map<std::string, std::string> assemble_context(const StateStore& store, const SubtaskSpec& subtask,
                                                    ContextMode mode) {
    std::map<std::string, std::string> context;
    for (const auto& in : subtask.input_keys) {
        if (in.from_root()) {
            auto it = store.root_inputs().find(in.key);
            if (it == store.root_inputs().end()) {
                if (in.required) {
                    throw MissingRequiredInput(in.key, in.source, "undefined");
                }
                continue;
            }
            context.emplace(in.key, it->second);
            continue;
        }
        const auto& source = store.entry(in.source);
        if (source.status == SubtaskStatus::completed) {
            context.emplace(in.key, serialize(*source.value));
            continue;
        }
        if (!in.required) {
            continue;
        }
        if (mode == ContextMode::gated) {
            throw MissingRequiredInput(in.key, in.source, to_string(source.status));
        }
        context.emplace(in.key, std::string(kUnavailableMarker));
    }
    return context;
}

}  // namespace rstd
