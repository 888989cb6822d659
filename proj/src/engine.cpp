#include "rstd/engine.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rstd/errors.hpp"

namespace rstd {

BranchDecision evaluate_branch_signals(const StateEntry& entry, const SubtaskSpec& subtask,
                                       const PipelineSpec& pipeline) {
    switch (entry.status) {
        case SubtaskStatus::failed: return {BranchKind::fail, {}, false};
        case SubtaskStatus::pending: {
            const auto policy = resolve_failure_policy(pipeline, subtask.id);
            if (entry.attempts < policy.max_repair_attempts) {
                return {BranchKind::retry, {}, false};
            }
            return {BranchKind::fail, {}, false};
        }
        case SubtaskStatus::skipped: return {BranchKind::proceed, {}, false};
        case SubtaskStatus::completed: break;
    }
    if (!entry.value || check_content_signal(*entry.value, subtask.confidence_path, subtask.confidence_threshold)) {
        return {BranchKind::proceed, {}, false};
    }
    auto targets = skip_targets(pipeline, subtask.id);
    if (!targets.empty()) {
        return {BranchKind::skip, std::move(targets), false};
    }
    return {BranchKind::proceed, {}, true};
}

std::vector<std::string> compute_retry_set(const PipelineSpec& pipeline, Strategy strategy,
                                           std::string_view failed_at) {
    const auto policy = resolve_failure_policy(pipeline, failed_at);
    switch (strategy) {
        case Strategy::monolithic: return topological_order(pipeline);
        case Strategy::static_decomposition: return policy.static_retry_set;
        case Strategy::rstd: return policy.rstd_retry_set;
    }
    return {};
}

std::string compile_monolithic(const PipelineSpec& pipeline) {
    if (pipeline.monolithic_prompt) {
        return *pipeline.monolithic_prompt;
    }
    const auto order = topological_order(pipeline);
    const auto render = [&](const SubtaskSpec& s) {
        std::map<std::string, std::string> context;
        for (const auto& in : s.input_keys) {
            if (in.from_root()) {
                context.emplace(in.key, pipeline.root_inputs.at(in.key));
            } else {
                context.emplace(in.key, "(output of step " + in.source + ")");
            }
        }
        return render_template(s.prompt_template, context);
    };
    if (order.size() == 1) {
        return render(pipeline.at(order.front()));
    }
    std::string out = "Complete every step below in order.\n\n";
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& s = pipeline.at(order[i]);
        out += fmt::format("## Step {} ({}): {}\n{}\n\n", i + 1, s.id, s.name, render(s));
    }
    out += fmt::format("Return one JSON object whose keys are {} and whose values are the outputs of those steps.\n",
                       fmt::join(order, ", "));
    return out;
}

SchemaNode monolithic_schema(const PipelineSpec& pipeline) {
    if (pipeline.subtasks.size() == 1) {
        return pipeline.subtasks.front().output_schema;
    }
    SchemaNode node;
    node.kind = SchemaKind::object;
    for (const auto& id : topological_order(pipeline)) {
        node.properties.emplace_back(id, pipeline.at(id).output_schema);
        node.required.push_back(id);
    }
    return node;
}

bool check_correct(const PipelineSpec& pipeline, const StateStore& store) {
    if (!pipeline.ground_truth) {
        return true;
    }
    const auto& gt = *pipeline.ground_truth;
    if (store.status(gt.subtask) != SubtaskStatus::completed) {
        return false;
    }
    const JsonValue* node = gt.path.find(store.read(gt.subtask));
    if (node == nullptr) {
        return false;
    }
    std::string haystack = node->is_string() ? node->get<std::string>() : node->dump();
    std::string needle = gt.expected;
    const auto lower = [](std::string& s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    };
    lower(haystack);
    lower(needle);
    return haystack.find(needle) != std::string::npos;
}

namespace {

// Marks the end of a run that cannot continue.
struct HardFailure {
    std::string message;
};

struct Attempt {
    bool passed = false;
    JsonValue value;
    CallRecord record;
};

// Mutable state of one run.
class Runner {
public:
    Runner(const PipelineSpec& pipeline, const RunConfig& config, const BackendRegistry& backends, Clock& clock,
           const CallObserver& observer)
        : pipeline_(pipeline),
          config_(config),
          backends_(backends),
          clock_(clock),
          observer_(observer),
          store_(pipeline),
          order_(topological_order(pipeline)) {
        if (config_.injection) {
            check_injection(*config_.injection, pipeline_);
        }
    }

    StateStore& store() { return store_; }
    std::vector<CallRecord>& calls() { return calls_; }

    RunResult run() {
        start_ = last_mark_ = clock_.now();
        RunReport report;
        report.pipeline_id = pipeline_.id;
        report.strategy = config_.strategy;
        report.run_index = config_.run_index;
        report.injected = config_.injection.has_value();
        if (config_.injection) {
            report.injection = format_injection(*config_.injection);
        }
        try {
            switch (config_.strategy) {
                case Strategy::monolithic: run_monolithic(); break;
                case Strategy::static_decomposition: run_static(); break;
                case Strategy::rstd: run_rstd(); break;
            }
            report.outcome = RunOutcome::success;
        } catch (const HardFailure& f) {
            report.outcome = RunOutcome::hard_failure;
            report.error = f.message;
        }
        report.wall_seconds = clock_.now() - start_;
        report.calls = calls_;
        report.finalize();
        report.correct = report.outcome == RunOutcome::success && check_correct(pipeline_, store_);
        report.state = store_.snapshot(pipeline_);
        return {std::move(report), store_};
    }

    // One call for `s`. `repair` switches to the repair prompt built from the
    // previous attempt.
    Attempt attempt(const SubtaskSpec& s, ContextMode mode, bool repair, bool retry_flag) {
        auto context = assemble_context(store_, s, mode);
        const std::uint32_t n = store_.entry(s.id).attempts + 1;

        bool injected = false;
        ValidationReport input_report;
        if (inject_now(s.id, n, InjectionMode::drop_field)) {
            context = corrupt_context(s, context);
            injected = true;
        }
        // Consumer-side contract: stored upstream values must still satisfy
        // their producer's schema by the time they reach this call.
        for (const auto& in : s.input_keys) {
            if (in.from_root() || store_.status(in.source) != SubtaskStatus::completed) {
                continue;
            }
            auto it = context.find(in.key);
            if (it == context.end()) {
                continue;
            }
            const auto upstream = validate(parse_value(it->second), pipeline_.at(in.source).output_schema);
            for (auto issue : upstream.errors) {
                issue.path = ValuePath({in.key}).str() + issue.path.substr(1);
                input_report.errors.push_back(std::move(issue));
            }
        }

        // Omitted optional inputs render as empty text.
        auto rendered = context;
        for (const auto& in : s.input_keys) {
            rendered.try_emplace(in.key);
        }
        std::string prompt = render_template(s.prompt_template, rendered);
        if (repair) {
            const auto& last = last_failure_.at(s.id);
            prompt = build_repair_prompt(prompt, last.raw, last.report);
        }

        auto response = call_backend(s.model_ref, prompt, s.id, n);
        store_.note_attempt(s.id);
        if (inject_now(s.id, n, InjectionMode::corrupt_response)) {
            response.text = apply_injection(*config_.injection, std::string_view(response.text));
            injected = true;
        }
        return finish(s.id, n, s.output_schema, std::move(prompt), std::move(response), retry_flag, injected,
                      std::move(input_report));
    }

private:
    bool inject_now(std::string_view id, std::uint32_t attempt, InjectionMode mode) {
        if (!config_.injection || injection_fired_ || config_.injection->mode != mode ||
            !should_inject(*config_.injection, id, attempt)) {
            return false;
        }
        injection_fired_ = true;
        return true;
    }

    std::map<std::string, std::string> corrupt_context(const SubtaskSpec& s,
                                                       const std::map<std::string, std::string>& context) {
        JsonValue view = JsonValue::object();
        for (const auto& [key, text] : context) {
            const auto* in = s.input(key);
            view[key] = (in != nullptr && !in->from_root() && text != kUnavailableMarker) ? parse_value(text)
                                                                                          : JsonValue(text);
        }
        view = apply_injection(*config_.injection, std::move(view));
        auto out = context;
        for (auto& [key, text] : out) {
            const auto& v = view.at(key);
            text = v.is_string() && s.input(key)->from_root() ? v.get<std::string>() : serialize(v);
        }
        return out;
    }

    ModelResponse call_backend(const std::string& model_ref, const std::string& prompt, const std::string& key,
                               std::uint32_t attempt) {
        dispatched_ = clock_.now();
        ModelRequest request{model_ref, prompt, 0.0, std::nullopt};
        auto response = backends_.get(model_ref).complete(request, CallKey{key, attempt, config_.run_index, config_.seed},
                                                          clock_);
        returned_ = clock_.now();
        return response;
    }

    Attempt finish(const std::string& id, std::uint32_t n, const SchemaNode& schema, std::string prompt,
                   ModelResponse response, bool retry_flag, bool injected,
                   ValidationReport report) {
        Attempt a;
        try {
            a.value = parse_value(response.text);
            report.append(validate(a.value, schema));
        } catch (const NoParsableValue&) {
            report.append(unparsable_report());
        }
        a.passed = report.passed();

        const double done = clock_.now();
        CallRecord& r = a.record;
        r.run_index = config_.run_index;
        r.subtask = id;
        r.attempt = n;
        r.prompt_tokens = response.prompt_tokens;
        r.completion_tokens = response.completion_tokens;
        r.model_latency = response.model_latency;
        r.framework_latency = std::max(0.0, (dispatched_ - last_mark_) + (done - returned_));
        r.validation_passed = a.passed;
        r.retry_flag = retry_flag;
        r.injection_applied = injected;
        last_mark_ = done;

        calls_.push_back(r);
        if (observer_) {
            observer_(r, prompt, response.text);
        }
        if (!a.passed) {
            last_failure_[id] = {response.text, std::move(report)};
        }
        return a;
    }

    void accept(const std::string& id, Attempt& a) {
        store_.write_validated(id, std::move(a.value),
                               {store_.entry(id).attempts, a.record.prompt_tokens, a.record.completion_tokens});
    }

    // ---- strategies ----------------------------------------------------------

    void run_rstd() {
        for (const auto& id : order_) {
            if (store_.status(id) == SubtaskStatus::skipped) {
                continue;
            }
            const auto& s = pipeline_.at(id);
            try {
                recover(s);
            } catch (const MissingRequiredInput& e) {
                throw HardFailure{"subtask " + id + ": " + e.what()};
            }
            const auto decision = evaluate_branch_signals(store_.entry(id), s, pipeline_);
            if (decision.kind == BranchKind::skip) {
                for (const auto& t : decision.skip_targets) {
                    if (store_.status(t) == SubtaskStatus::pending) {
                        store_.mark(t, SubtaskStatus::skipped);
                    }
                }
            } else if (decision.low_content) {
                store_.set_low_content(id, true);
            }
        }
    }

    // Runs `s` until it passes or its policy is exhausted. Between attempts
    // the rstd retry set runs; members other than `s` are re-executed from
    // their normal prompt, `s` itself from the repair prompt.
    void recover(const SubtaskSpec& s) {
        const auto policy = resolve_failure_policy(pipeline_, s.id);
        const bool self_in_set =
            std::find(policy.rstd_retry_set.begin(), policy.rstd_retry_set.end(), s.id) != policy.rstd_retry_set.end();

        Attempt a = attempt(s, ContextMode::gated, false, false);
        while (!a.passed) {
            const auto decision = evaluate_branch_signals(store_.entry(s.id), s, pipeline_);
            if (decision.kind != BranchKind::retry) {
                const auto attempts = store_.entry(s.id).attempts;
                store_.mark(s.id, SubtaskStatus::failed, attempts);
                throw HardFailure{fmt::format("subtask {} failed validation after {} attempts", s.id, attempts)};
            }
            for (const auto& b : policy.rstd_retry_set) {
                if (b == s.id) {
                    continue;
                }
                const auto& blamed = pipeline_.at(b);
                if (store_.status(b) == SubtaskStatus::skipped) {
                    throw HardFailure{"retry set member " + b + " was skipped and cannot be retried"};
                }
                store_.reopen(b);
                Attempt rb = attempt(blamed, ContextMode::gated, false, true);
                if (!rb.passed) {
                    store_.mark(b, SubtaskStatus::failed, store_.entry(b).attempts);
                    throw HardFailure{"retry of " + b + " (blamed by " + s.id + ") also failed validation"};
                }
                accept(b, rb);
            }
            a = attempt(s, ContextMode::gated, self_in_set, self_in_set);
        }
        accept(s.id, a);
    }

    void run_static() {
        std::set<std::string> to_retry;
        for (const auto& id : order_) {
            const auto& s = pipeline_.at(id);
            Attempt a = attempt(s, ContextMode::ungated, false, false);
            if (a.passed) {
                accept(id, a);
                continue;
            }
            store_.mark(id, SubtaskStatus::failed, store_.entry(id).attempts);
            const auto set = resolve_failure_policy(pipeline_, id).static_retry_set;
            to_retry.insert(set.begin(), set.end());
        }
        for (const auto& id : in_topological_order(pipeline_, to_retry)) {
            store_.reopen(id);
            Attempt a = attempt(pipeline_.at(id), ContextMode::ungated, false, true);
            if (!a.passed) {
                store_.mark(id, SubtaskStatus::failed, store_.entry(id).attempts);
                throw HardFailure{"static retry of " + id + " failed validation"};
            }
            accept(id, a);
        }
    }

    std::optional<InjectionSpec> monolithic_injection() const {
        if (!config_.injection) {
            return std::nullopt;
        }
        auto spec = *config_.injection;
        if (spec.target == kMonolithicKey) {
            return spec;
        }
        const auto& steps = spec.path.steps();
        std::vector<ValuePath::Step> mapped;
        if (spec.mode == InjectionMode::drop_field) {
            // Input coordinates {key: value} map onto the producer's section.
            const auto* key = std::get_if<std::string>(&steps.front());
            const auto* in = key != nullptr ? pipeline_.at(spec.target).input(*key) : nullptr;
            if (in == nullptr || in->from_root()) {
                throw PathNotFound(spec.path.str());
            }
            if (pipeline_.subtasks.size() > 1) {
                mapped.emplace_back(in->source);
            }
            mapped.insert(mapped.end(), steps.begin() + 1, steps.end());
        } else {
            if (pipeline_.subtasks.size() > 1) {
                mapped.emplace_back(spec.target);
            }
            mapped.insert(mapped.end(), steps.begin(), steps.end());
        }
        spec.target = std::string(kMonolithicKey);
        spec.mode = InjectionMode::corrupt_response;
        spec.path = ValuePath(std::move(mapped));
        return spec;
    }

    void run_monolithic() {
        const auto prompt = compile_monolithic(pipeline_);
        const auto schema = monolithic_schema(pipeline_);
        const auto injection = monolithic_injection();
        const std::string key(kMonolithicKey);
        const auto& model_ref = pipeline_.subtasks.front().model_ref;

        Attempt a;
        for (std::uint32_t n = 1; n <= 2; ++n) {
            auto response = call_backend(model_ref, prompt, key, n);
            bool injected = false;
            if (injection && !injection_fired_ && should_inject(*injection, key, n)) {
                response.text = apply_injection(*injection, std::string_view(response.text));
                injection_fired_ = injected = true;
            }
            a = finish(key, n, schema, prompt, std::move(response), n > 1, injected, {});
            if (a.passed) {
                break;
            }
        }
        const auto attempts = a.record.attempt;
        if (!a.passed) {
            for (const auto& s : pipeline_.subtasks) {
                store_.mark(s.id, SubtaskStatus::failed, attempts);
            }
            throw HardFailure{"monolithic output failed validation on the full rerun"};
        }
        for (const auto& s : pipeline_.subtasks) {
            JsonValue part = pipeline_.subtasks.size() == 1 ? a.value : a.value.at(s.id);
            store_.write_validated(s.id, std::move(part), {attempts, 0, 0});
        }
    }

    const PipelineSpec& pipeline_;
    const RunConfig& config_;
    const BackendRegistry& backends_;
    Clock& clock_;
    const CallObserver& observer_;
    StateStore store_;
    std::vector<std::string> order_;
    std::vector<CallRecord> calls_;

    struct Failure {
        std::string raw;
        ValidationReport report;
    };
    std::map<std::string, Failure> last_failure_;
    bool injection_fired_ = false;
    double start_ = 0.0;
    double last_mark_ = 0.0;
    double dispatched_ = 0.0;
    double returned_ = 0.0;
};

}  // namespace

SubtaskResult execute_subtask(const PipelineSpec& pipeline, const SubtaskSpec& subtask, StateStore& store,
                              const BackendRegistry& backends, Clock& clock,
                              const std::optional<InjectionSpec>& injection, std::uint32_t run_index,
                              std::uint64_t seed, const CallObserver& observer) {
    RunConfig config;
    config.strategy = Strategy::rstd;
    config.injection = injection;
    config.run_index = run_index;
    config.seed = seed;
    Runner runner(pipeline, config, backends, clock, observer);
    runner.store() = store;

    const auto policy = resolve_failure_policy(pipeline, subtask.id);
    auto a = runner.attempt(subtask, ContextMode::gated, false, false);
    while (!a.passed && runner.store().entry(subtask.id).attempts < policy.max_repair_attempts) {
        a = runner.attempt(subtask, ContextMode::gated, true, true);
    }
    auto& st = runner.store();
    if (a.passed) {
        st.write_validated(subtask.id, std::move(a.value),
                           {st.entry(subtask.id).attempts, a.record.prompt_tokens, a.record.completion_tokens});
    } else {
        st.mark(subtask.id, SubtaskStatus::failed, st.entry(subtask.id).attempts);
    }
    store = st;
    return {store.entry(subtask.id), runner.calls()};
}

RunResult execute_run(const PipelineSpec& pipeline, const RunConfig& config, const BackendRegistry& backends,
                      Clock& clock, const CallObserver& observer) {
    Runner runner(pipeline, config, backends, clock, observer);
    return runner.run();
}

RunReport run(const PipelineSpec& pipeline, const RunConfig& config, const BackendRegistry& backends, Clock& clock,
              const CallObserver& observer) {
    return execute_run(pipeline, config, backends, clock, observer).report;
}

}  // namespace rstd
