#include "rstd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rstd/errors.hpp"

namespace rstd {

using ojson = nlohmann::ordered_json;

std::string to_string(RunOutcome outcome) {
    return outcome == RunOutcome::success ? "success" : "hard_failure";
}

void RunReport::finalize() {
    total_tokens = 0;
    retry_tokens = 0;
    model_seconds = 0.0;
    for (const auto& c : calls) {
        total_tokens += c.tokens();
        if (c.retry_flag) {
            retry_tokens += c.tokens();
        }
        model_seconds += c.model_latency;
    }
    framework_seconds = wall_seconds - model_seconds;
}

std::uint64_t retry_tokens(const RunReport& report) {
    std::uint64_t sum = 0;
    for (const auto& c : report.calls) {
        if (c.retry_flag) {
            sum += c.tokens();
        }
    }
    return sum;
}

double measure_framework_overhead(const RunReport& report) {
    double model = 0.0;
    for (const auto& c : report.calls) {
        model += c.model_latency;
    }
    return report.wall_seconds - model;
}

double framework_fraction(const RunReport& report) {
    return report.wall_seconds > 0.0 ? measure_framework_overhead(report) / report.wall_seconds : 0.0;
}

double failure_rate(const std::vector<RunReport>& reports, std::string_view subtask) {
    if (reports.empty()) {
        throw PreconditionViolated("failure_rate needs at least one report");
    }
    std::size_t attempts = 0;
    std::size_t failures = 0;
    for (const auto& r : reports) {
        for (const auto& c : r.calls) {
            if (c.subtask != subtask || c.retry_flag) {
                continue;
            }
            ++attempts;
            if (!c.validation_passed && !c.injection_applied) {
                ++failures;
            }
        }
    }
    return attempts == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(attempts);
}

SampleStats summarize(std::span<const double> samples) {
    SampleStats s;
    double m2 = 0.0;
    for (double x : samples) {
        ++s.n;
        const double delta = x - s.mean;
        s.mean += delta / static_cast<double>(s.n);
        m2 += delta * (x - s.mean);
    }
    if (s.n >= 2) {
        s.sd = std::sqrt(std::max(0.0, m2 / static_cast<double>(s.n - 1)));
    }
    return s;
}

AggregateTable aggregate(const std::vector<RunReport>& reports) {
    if (reports.empty()) {
        throw Error("aggregate needs at least one report");
    }
    AggregateTable t;
    t.pipeline_id = reports.front().pipeline_id;
    t.strategy = reports.front().strategy;
    t.runs = reports.size();

    std::vector<double> tokens, total, wall, model, framework, calls, retry;
    std::size_t correct = 0;
    for (const auto& r : reports) {
        if (r.pipeline_id != t.pipeline_id || r.strategy != t.strategy) {
            throw MixedConfig(fmt::format("cannot aggregate {}/{} with {}/{}", t.pipeline_id, to_string(t.strategy),
                                          r.pipeline_id, to_string(r.strategy)));
        }
        tokens.push_back(static_cast<double>(r.baseline_tokens()));
        total.push_back(static_cast<double>(r.total_tokens));
        wall.push_back(r.wall_seconds);
        model.push_back(r.model_seconds);
        framework.push_back(r.framework_seconds);
        calls.push_back(static_cast<double>(r.calls.size()));
        retry.push_back(static_cast<double>(r.retry_tokens));
        correct += r.correct ? 1 : 0;
        t.hard_failures += r.outcome == RunOutcome::hard_failure ? 1 : 0;
    }
    t.tokens = summarize(tokens);
    t.total_tokens = summarize(total);
    t.wall_seconds = summarize(wall);
    t.model_seconds = summarize(model);
    t.framework_seconds = summarize(framework);
    t.calls = summarize(calls);
    t.retry_tokens = summarize(retry);
    t.correct_fraction = static_cast<double>(correct) / static_cast<double>(reports.size());
    return t;
}

// ---------------------------------------------------------------------------
// Comparison tables

const StrategyColumn* ComparisonTable::column(Strategy s) const {
    for (const auto& c : columns) {
        if (c.strategy == s) {
            return &c;
        }
    }
    return nullptr;
}

std::optional<double> ComparisonTable::retry_delta(Strategy a, Strategy b) const {
    const auto* ca = column(a);
    const auto* cb = column(b);
    if (ca == nullptr || cb == nullptr || cb->retry().mean == 0.0) {
        return std::nullopt;
    }
    return (ca->retry().mean - cb->retry().mean) / cb->retry().mean * 100.0;
}

ComparisonTable build_comparison(const std::vector<RunReport>& reports) {
    if (reports.empty()) {
        throw Error("no runs to tabulate");
    }
    ComparisonTable table;
    table.pipeline_id = reports.front().pipeline_id;
    for (Strategy s : {Strategy::monolithic, Strategy::static_decomposition, Strategy::rstd}) {
        std::vector<RunReport> clean;
        std::vector<RunReport> injected;
        for (const auto& r : reports) {
            if (r.pipeline_id != table.pipeline_id) {
                throw MixedConfig("record stream mixes pipelines '" + table.pipeline_id + "' and '" + r.pipeline_id +
                                  "'");
            }
            if (r.strategy != s) {
                continue;
            }
            (r.injected ? injected : clean).push_back(r);
            if (r.injected && table.injection.empty()) {
                table.injection = r.injection;
            }
            table.partial = table.partial || r.outcome == RunOutcome::hard_failure;
        }
        if (clean.empty() && injected.empty()) {
            continue;
        }
        StrategyColumn col;
        col.strategy = s;
        // Without clean runs the injected runs stand in for normal execution.
        col.clean = aggregate(clean.empty() ? injected : clean);
        if (!injected.empty()) {
            col.injected = aggregate(injected);
        }
        std::size_t correct = 0;
        for (const auto* group : {&clean, &injected}) {
            correct += static_cast<std::size_t>(
                std::count_if(group->begin(), group->end(), [](const RunReport& r) { return r.correct; }));
        }
        col.correct_fraction =
            static_cast<double>(correct) / static_cast<double>(clean.size() + injected.size());
        table.repetitions = std::max(table.repetitions, std::max(clean.size(), injected.size()));
        table.columns.push_back(std::move(col));
    }
    return table;
}

namespace {

bool integral(double x) { return std::abs(x - std::round(x)) < 1e-9; }

std::string fmt_count(double x) { return integral(x) ? fmt::format("{:.0f}", x) : fmt::format("{:.1f}", x); }

std::string fmt_seconds(double x) { return fmt::format("{:.2f}", x); }

std::string fmt_percent(double fraction) {
    const double pct = fraction * 100.0;
    return integral(pct) ? fmt::format("{:.0f}%", pct) : fmt::format("{:.1f}%", pct);
}

std::string column_title(Strategy s) {
    switch (s) {
        case Strategy::monolithic: return "Mono.";
        case Strategy::static_decomposition: return "Static";
        case Strategy::rstd: return "RSTD";
    }
    return "?";
}

struct Row {
    std::string label;
    std::vector<std::string> cells;
};

std::vector<Row> table_rows(const ComparisonTable& t) {
    std::vector<Row> rows = {{"Tokens", {}},      {"Latency s", {}}, {"LLM API s", {}},   {"Framework s", {}},
                             {"LLM calls", {}},   {"Correct", {}},   {"Retry tokens", {}}};
    const auto pm = [](const std::string& a, const std::string& b) { return a + " ± " + b; };
    for (const auto& c : t.columns) {
        rows[0].cells.push_back(pm(fmt_count(c.clean.tokens.mean), fmt_count(c.clean.tokens.sd)));
        rows[1].cells.push_back(pm(fmt_seconds(c.clean.wall_seconds.mean), fmt_seconds(c.clean.wall_seconds.sd)));
        rows[2].cells.push_back(pm(fmt_seconds(c.clean.model_seconds.mean), fmt_seconds(c.clean.model_seconds.sd)));
        rows[3].cells.push_back(
            pm(fmt_seconds(c.clean.framework_seconds.mean), fmt_seconds(c.clean.framework_seconds.sd)));
        rows[4].cells.push_back(fmt_count(c.clean.calls.mean));
        rows[5].cells.push_back(fmt_percent(c.correct_fraction));
        rows[6].cells.push_back(pm(fmt_count(c.retry().mean), fmt_count(c.retry().sd)));
    }
    return rows;
}

// Display width, counting UTF-8 code points.
std::size_t width(const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
}

std::string pad(const std::string& s, std::size_t w) { return s + std::string(w > width(s) ? w - width(s) : 0, ' '); }

}  // namespace

std::string render_text(const ComparisonTable& t) {
    std::string out = fmt::format("Pipeline {} ({} runs per configuration)\n", t.pipeline_id, t.repetitions);
    if (!t.injection.empty()) {
        out += "Retry cost measured under injection: " + t.injection + "\n";
    }
    if (t.partial) {
        out += "PARTIAL: at least one run ended in hard failure\n";
    }
    out += "\n";

    const auto rows = table_rows(t);
    std::size_t label_w = std::string("Metric").size();
    for (const auto& r : rows) {
        label_w = std::max(label_w, width(r.label));
    }
    std::vector<std::size_t> col_w;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        std::size_t w = width(column_title(t.columns[i].strategy));
        for (const auto& r : rows) {
            w = std::max(w, width(r.cells[i]));
        }
        col_w.push_back(w);
    }
    const auto line = [&](const std::string& label, const std::vector<std::string>& cells) {
        std::string l = pad(label, label_w);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            l += "  " + pad(cells[i], col_w[i]);
        }
        while (!l.empty() && l.back() == ' ') {
            l.pop_back();
        }
        return l + "\n";
    };
    std::vector<std::string> titles;
    for (const auto& c : t.columns) {
        titles.push_back(column_title(c.strategy));
    }
    out += line("Metric", titles);
    for (const auto& r : rows) {
        out += line(r.label, r.cells);
    }

    std::vector<std::string> deltas;
    const auto add = [&](const char* name, Strategy a, Strategy b) {
        if (auto d = t.retry_delta(a, b)) {
            deltas.push_back(fmt::format("{} {:+.1f}%", name, *d));
        }
    };
    add("static vs mono", Strategy::static_decomposition, Strategy::monolithic);
    add("rstd vs mono", Strategy::rstd, Strategy::monolithic);
    add("rstd vs static", Strategy::rstd, Strategy::static_decomposition);
    if (!deltas.empty()) {
        out += "\nRetry-token deltas: " + fmt::format("{}", fmt::join(deltas, "; ")) + "\n";
    }
    return out;
}

std::string render_csv(const ComparisonTable& t) {
    std::string out = "pipeline,strategy,metric,mean,sd,n\n";
    const auto row = [&](Strategy s, const char* metric, const SampleStats& st) {
        out += fmt::format("{},{},{},{:.6f},{:.6f},{}\n", t.pipeline_id, to_string(s), metric, st.mean, st.sd, st.n);
    };
    for (const auto& c : t.columns) {
        row(c.strategy, "tokens", c.clean.tokens);
        row(c.strategy, "latency_s", c.clean.wall_seconds);
        row(c.strategy, "llm_api_s", c.clean.model_seconds);
        row(c.strategy, "framework_s", c.clean.framework_seconds);
        row(c.strategy, "llm_calls", c.clean.calls);
        out += fmt::format("{},{},correct,{:.6f},0.000000,{}\n", t.pipeline_id, to_string(c.strategy),
                           c.correct_fraction, c.clean.runs + (c.injected ? c.injected->runs : 0));
        row(c.strategy, "retry_tokens", c.retry());
    }
    const auto delta = [&](const char* name, Strategy a, Strategy b) {
        if (auto d = t.retry_delta(a, b)) {
            out += fmt::format("{},,{},{:.6f},,\n", t.pipeline_id, name, *d);
        }
    };
    delta("retry_delta_pct_static_vs_mono", Strategy::static_decomposition, Strategy::monolithic);
    delta("retry_delta_pct_rstd_vs_mono", Strategy::rstd, Strategy::monolithic);
    delta("retry_delta_pct_rstd_vs_static", Strategy::rstd, Strategy::static_decomposition);
    return out;
}

// ---------------------------------------------------------------------------
// Record stream

ojson call_to_json(const CallRecord& c) {
    ojson j;
    j["record"] = "call";
    j["run_index"] = c.run_index;
    j["subtask"] = c.subtask;
    j["attempt"] = c.attempt;
    j["prompt_tokens"] = c.prompt_tokens;
    j["completion_tokens"] = c.completion_tokens;
    j["model_latency"] = c.model_latency;
    j["framework_latency"] = c.framework_latency;
    j["validation_passed"] = c.validation_passed;
    j["retry_flag"] = c.retry_flag;
    j["injection_applied"] = c.injection_applied;
    return j;
}

ojson run_summary_to_json(const RunReport& r) {
    ojson j;
    j["record"] = "run";
    j["pipeline_id"] = r.pipeline_id;
    j["strategy"] = to_string(r.strategy);
    j["run_index"] = r.run_index;
    j["injected"] = r.injected;
    j["injection"] = r.injection;
    j["calls"] = r.calls.size();
    j["total_tokens"] = r.total_tokens;
    j["retry_tokens"] = r.retry_tokens;
    j["wall_seconds"] = r.wall_seconds;
    j["model_seconds"] = r.model_seconds;
    j["framework_seconds"] = r.framework_seconds;
    j["outcome"] = to_string(r.outcome);
    j["correct"] = r.correct;
    j["error"] = r.error;
    j["state"] = r.state;
    return j;
}

void write_records(std::ostream& out, const RunReport& report) {
    for (const auto& c : report.calls) {
        out << call_to_json(c).dump() << '\n';
    }
    out << run_summary_to_json(report).dump() << '\n';
}

void write_records(std::ostream& out, const std::vector<RunReport>& reports) {
    for (const auto& r : reports) {
        write_records(out, r);
    }
}

namespace {

template <typename T>
T field(const ojson& j, const char* name, std::size_t line) {
    if (!j.contains(name)) {
        throw ParseError(fmt::format("record line {}: missing field '{}'", line, name));
    }
    try {
        return j[name].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(fmt::format("record line {}: field '{}' has the wrong type", line, name));
    }
}

}  // namespace

std::vector<RunReport> read_records(std::istream& in) {
    std::vector<RunReport> reports;
    std::vector<CallRecord> pending;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) {
            continue;
        }
        ojson j;
        try {
            j = ojson::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            throw ParseError(fmt::format("record line {}: not JSON", line));
        }
        const auto kind = field<std::string>(j, "record", line);
        if (kind == "call") {
            CallRecord c;
            c.run_index = field<std::uint32_t>(j, "run_index", line);
            c.subtask = field<std::string>(j, "subtask", line);
            c.attempt = field<std::uint32_t>(j, "attempt", line);
            c.prompt_tokens = field<std::uint64_t>(j, "prompt_tokens", line);
            c.completion_tokens = field<std::uint64_t>(j, "completion_tokens", line);
            c.model_latency = field<double>(j, "model_latency", line);
            c.framework_latency = field<double>(j, "framework_latency", line);
            c.validation_passed = field<bool>(j, "validation_passed", line);
            c.retry_flag = field<bool>(j, "retry_flag", line);
            c.injection_applied = field<bool>(j, "injection_applied", line);
            pending.push_back(std::move(c));
        } else if (kind == "run") {
            RunReport r;
            r.pipeline_id = field<std::string>(j, "pipeline_id", line);
            r.strategy = parse_strategy(field<std::string>(j, "strategy", line));
            r.run_index = field<std::uint32_t>(j, "run_index", line);
            r.injected = field<bool>(j, "injected", line);
            r.injection = field<std::string>(j, "injection", line);
            const auto n = field<std::size_t>(j, "calls", line);
            if (n != pending.size()) {
                throw ParseError(fmt::format("record line {}: run summary counts {} calls but {} precede it", line,
                                             n, pending.size()));
            }
            r.calls = std::move(pending);
            pending.clear();
            r.wall_seconds = field<double>(j, "wall_seconds", line);
            const auto outcome = field<std::string>(j, "outcome", line);
            r.outcome = outcome == "success" ? RunOutcome::success : RunOutcome::hard_failure;
            r.correct = field<bool>(j, "correct", line);
            r.error = field<std::string>(j, "error", line);
            r.state = j.contains("state") ? j["state"] : ojson::array();
            r.finalize();
            reports.push_back(std::move(r));
        } else {
            throw ParseError(fmt::format("record line {}: unknown record kind '{}'", line, kind));
        }
    }
    if (!pending.empty()) {
        throw ParseError("record stream ends with call records but no run summary");
    }
    return reports;
}

}  // namespace rstd
