#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rstd/pipeline.hpp"

namespace rstd {

// Time source for a run. The virtual clock only moves when a mock backend
// "spends" simulated latency, so timings are exactly reproducible.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;
    virtual void wait(double seconds) = 0;
};

class VirtualClock final : public Clock {
public:
    double now() override { return now_; }
    void wait(double seconds) override { now_ += seconds; }

private:
    double now_ = 0.0;
};

class SteadyClock final : public Clock {
public:
    SteadyClock() : start_(std::chrono::steady_clock::now()) {}
    double now() override;
    void wait(double seconds) override;

private:
    std::chrono::steady_clock::time_point start_;
};

struct ModelRequest {
    std::string model_ref;
    std::string prompt;
    double temperature = 0.0;
    std::optional<std::uint64_t> max_output_tokens;
};

struct ModelResponse {
    std::string text;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    double model_latency = 0.0;
};

// Identifies one model call within a run: subtask id (or "monolithic") and
// 1-based attempt, plus the run coordinates used for per-run scripting and
// jitter.
struct CallKey {
    std::string subtask;
    std::uint32_t attempt = 1;
    std::uint32_t run_index = 1;
    std::uint64_t seed = 0;
};

// ceil(chars / 4); a fixed stand-in for a model tokenizer.
std::uint64_t count_tokens(std::string_view text);

class Backend {
public:
    virtual ~Backend() = default;
    // Throws ScriptMiss / ScriptError (mock) or TransportError (HTTP).
    virtual ModelResponse complete(const ModelRequest& request, const CallKey& key, Clock& clock) = 0;
};

struct MockEntry {
    std::string subtask;
    std::uint32_t attempt = 1;
    std::string response_text;
    // At most one of these; total_tokens fixes prompt + completion.
    std::optional<std::uint64_t> completion_tokens;
    std::optional<std::uint64_t> total_tokens;
    double simulated_latency = 0.0;
    std::optional<std::uint64_t> jitter_seed;
    // Empty: applies to every run. Otherwise only to the listed run indices,
    // taking precedence over the generic entry for the same key.
    std::vector<std::uint32_t> runs;
};

// Relative amplitude of seeded latency jitter.
inline constexpr double kJitterFraction = 0.10;

class MockScript {
public:
    // Throws ScriptError on malformed documents or non-dense attempt keys.
    static MockScript parse(std::string_view document);
    static MockScript load(const std::string& path);

    explicit MockScript(std::vector<MockEntry> entries);
    MockScript() = default;

    const MockEntry* find(std::string_view subtask, std::uint32_t attempt, std::uint32_t run_index) const;
    const std::vector<MockEntry>& entries() const noexcept { return entries_; }

    // Every subtask and the monolithic call need an attempt-1 entry. Returns
    // the missing keys.
    std::vector<std::string> missing_first_attempts(const PipelineSpec& pipeline) const;

private:
    std::vector<MockEntry> entries_;
};

class MockBackend final : public Backend {
public:
    explicit MockBackend(MockScript script) : script_(std::move(script)) {}
    ModelResponse complete(const ModelRequest& request, const CallKey& key, Clock& clock) override;
    const MockScript& script() const noexcept { return script_; }

    // Latency for `entry` under `key`, jitter applied.
    static double latency_for(const MockEntry& entry, const CallKey& key);

private:
    MockScript script_;
};

struct HttpConfig {
    std::string base_url;  // e.g. "https://api.openai.com/v1"
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model;
    double timeout_seconds = 60.0;

    // Throws ParseError.
    static HttpConfig parse(std::string_view document);
};

// Chat-completions client. Server-reported usage is used when present,
// count_tokens() otherwise.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpConfig config);
    ModelResponse complete(const ModelRequest& request, const CallKey& key, Clock& clock) override;

private:
    HttpConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

// Backend selection per model_ref, with a fallback.
class BackendRegistry {
public:
    BackendRegistry() = default;
    explicit BackendRegistry(std::shared_ptr<Backend> fallback) : fallback_(std::move(fallback)) {}

    void set(std::string model_ref, std::shared_ptr<Backend> backend);
    void set_default(std::shared_ptr<Backend> backend) { fallback_ = std::move(backend); }
    // Throws Error when nothing is registered for `model_ref` and there is no default.
    Backend& get(std::string_view model_ref) const;

private:
    std::map<std::string, std::shared_ptr<Backend>, std::less<>> by_ref_;
    std::shared_ptr<Backend> fallback_;
};

}  // namespace rstd
