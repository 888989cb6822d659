#include "rstd/backend.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rstd/errors.hpp"

namespace rstd {

double SteadyClock::now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void SteadyClock::wait(double seconds) {
    if (seconds > 0.0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    }
}

std::uint64_t count_tokens(std::string_view text) { return (text.size() + 3) / 4; }

// ---------------------------------------------------------------------------
// Mock

namespace {

std::uint64_t read_count(const nlohmann::json& v, const std::string& where) {
    if (!v.is_number_unsigned()) {
        throw ScriptError(where + ": must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

// splitmix64 finalizer; folds the seeds into one mt19937_64 seed.
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

MockScript::MockScript(std::vector<MockEntry> entries) : entries_(std::move(entries)) {
    std::map<std::string, std::set<std::uint32_t>> generic;
    std::set<std::tuple<std::string, std::uint32_t, std::uint32_t>> seen;
    for (const auto& e : entries_) {
        if (e.attempt < 1) {
            throw ScriptError("entry for '" + e.subtask + "': attempt must be >= 1");
        }
        if (e.completion_tokens && e.total_tokens) {
            throw ScriptError("entry for '" + e.subtask + "': give completion_tokens or total_tokens, not both");
        }
        if (e.simulated_latency < 0.0) {
            throw ScriptError("entry for '" + e.subtask + "': simulated_latency must be >= 0");
        }
        if (e.runs.empty()) {
            generic[e.subtask].insert(e.attempt);
            if (!seen.emplace(e.subtask, e.attempt, 0).second) {
                throw ScriptError(fmt::format("duplicate entry for ({}, {})", e.subtask, e.attempt));
            }
        }
        for (auto r : e.runs) {
            if (!seen.emplace(e.subtask, e.attempt, r).second) {
                throw ScriptError(fmt::format("duplicate entry for ({}, {}, run {})", e.subtask, e.attempt, r));
            }
        }
    }
    for (const auto& [subtask, attempts] : generic) {
        if (*attempts.rbegin() != attempts.size()) {
            throw ScriptError("attempt keys for '" + subtask + "' must be dense from 1");
        }
    }
}

MockScript MockScript::parse(std::string_view document) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document.begin(), document.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ScriptError(std::string("malformed mock script: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
        throw ScriptError("mock script must be an object with an 'entries' array");
    }
    for (const auto& [key, _] : doc.items()) {
        if (key != "entries" && key != "description") {
            throw ScriptError("mock script: unknown field '" + key + "'");
        }
    }
    static const std::set<std::string> known = {"subtask",           "attempt",     "response_text",
                                                "response_json",     "completion_tokens", "total_tokens",
                                                "simulated_latency", "jitter_seed", "runs"};
    std::vector<MockEntry> entries;
    for (std::size_t i = 0; i < doc["entries"].size(); ++i) {
        const auto& j = doc["entries"][i];
        const auto where = fmt::format("entries[{}]", i);
        if (!j.is_object()) {
            throw ScriptError(where + ": must be an object");
        }
        for (const auto& [key, _] : j.items()) {
            if (!known.contains(key)) {
                throw ScriptError(where + ": unknown field '" + key + "'");
            }
        }
        MockEntry e;
        if (!j.contains("subtask") || !j["subtask"].is_string()) {
            throw ScriptError(where + ".subtask: missing or not a string");
        }
        e.subtask = j["subtask"].get<std::string>();
        if (j.contains("attempt")) {
            e.attempt = static_cast<std::uint32_t>(read_count(j["attempt"], where + ".attempt"));
        }
        const bool has_text = j.contains("response_text");
        const bool has_json = j.contains("response_json");
        if (has_text == has_json) {
            throw ScriptError(where + ": exactly one of response_text or response_json is required");
        }
        if (has_text) {
            if (!j["response_text"].is_string()) {
                throw ScriptError(where + ".response_text: must be a string");
            }
            e.response_text = j["response_text"].get<std::string>();
        } else {
            e.response_text = j["response_json"].dump();
        }
        if (j.contains("completion_tokens")) {
            e.completion_tokens = read_count(j["completion_tokens"], where + ".completion_tokens");
        }
        if (j.contains("total_tokens")) {
            e.total_tokens = read_count(j["total_tokens"], where + ".total_tokens");
        }
        if (j.contains("simulated_latency")) {
            if (!j["simulated_latency"].is_number()) {
                throw ScriptError(where + ".simulated_latency: must be a number");
            }
            e.simulated_latency = j["simulated_latency"].get<double>();
        }
        if (j.contains("jitter_seed")) {
            e.jitter_seed = read_count(j["jitter_seed"], where + ".jitter_seed");
        }
        if (j.contains("runs")) {
            if (!j["runs"].is_array()) {
                throw ScriptError(where + ".runs: must be an array of run indices");
            }
            for (const auto& r : j["runs"]) {
                e.runs.push_back(static_cast<std::uint32_t>(read_count(r, where + ".runs")));
            }
        }
        entries.push_back(std::move(e));
    }
    return MockScript(std::move(entries));
}

MockScript MockScript::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ScriptError("cannot read mock script '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const MockEntry* MockScript::find(std::string_view subtask, std::uint32_t attempt, std::uint32_t run_index) const {
    const MockEntry* generic = nullptr;
    for (const auto& e : entries_) {
        if (e.subtask != subtask || e.attempt != attempt) {
            continue;
        }
        if (e.runs.empty()) {
            generic = &e;
        } else if (std::find(e.runs.begin(), e.runs.end(), run_index) != e.runs.end()) {
            return &e;
        }
    }
    return generic;
}

std::vector<std::string> MockScript::missing_first_attempts(const PipelineSpec& pipeline) const {
    std::vector<std::string> missing;
    const auto check = [&](const std::string& id) {
        const bool found = std::any_of(entries_.begin(), entries_.end(), [&](const MockEntry& e) {
            return e.subtask == id && e.attempt == 1 && e.runs.empty();
        });
        if (!found) {
            missing.push_back(id);
        }
    };
    for (const auto& s : pipeline.subtasks) {
        check(s.id);
    }
    check(std::string(kMonolithicKey));
    return missing;
}

double MockBackend::latency_for(const MockEntry& entry, const CallKey& key) {
    if (!entry.jitter_seed) {
        return entry.simulated_latency;
    }
    std::mt19937_64 rng(mix(*entry.jitter_seed ^ mix(key.seed ^ mix(key.run_index))));
    // u in [-1, 1) from the top 53 bits.
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double u = 2.0 * unit - 1.0;
    return entry.simulated_latency * (1.0 + kJitterFraction * u);
}

ModelResponse MockBackend::complete(const ModelRequest& request, const CallKey& key, Clock& clock) {
    const MockEntry* entry = script_.find(key.subtask, key.attempt, key.run_index);
    if (entry == nullptr) {
        throw ScriptMiss(fmt::format("mock script has no entry for ({}, attempt {}, run {})", key.subtask,
                                     key.attempt, key.run_index));
    }
    ModelResponse r;
    r.text = entry->response_text;
    r.prompt_tokens = count_tokens(request.prompt);
    if (entry->total_tokens) {
        if (*entry->total_tokens < r.prompt_tokens) {
            throw ScriptError(fmt::format("({}, attempt {}): total_tokens {} is below the prompt's {} tokens",
                                          key.subtask, key.attempt, *entry->total_tokens, r.prompt_tokens));
        }
        r.completion_tokens = *entry->total_tokens - r.prompt_tokens;
    } else if (entry->completion_tokens) {
        r.completion_tokens = *entry->completion_tokens;
    } else {
        r.completion_tokens = count_tokens(r.text);
    }
    r.model_latency = latency_for(*entry, key);
    clock.wait(r.model_latency);
    return r;
}

// ---------------------------------------------------------------------------
// Registry

void BackendRegistry::set(std::string model_ref, std::shared_ptr<Backend> backend) {
    by_ref_[std::move(model_ref)] = std::move(backend);
}

Backend& BackendRegistry::get(std::string_view model_ref) const {
    if (auto it = by_ref_.find(model_ref); it != by_ref_.end()) {
        return *it->second;
    }
    if (!fallback_) {
        throw Error("no backend registered for model_ref '" + std::string(model_ref) + "'");
    }
    return *fallback_;
}

}  // namespace rstd
