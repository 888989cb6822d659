#include "rstd/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rstd/errors.hpp"

namespace rstd {

using ojson = nlohmann::ordered_json;

CycleError::CycleError(std::vector<std::string> cycle)
    : Error("dependency cycle: " + fmt::format("{}", fmt::join(cycle, " -> ")) +
            (cycle.empty() ? "" : " -> " + cycle.front())),
      cycle_(std::move(cycle)) {}

std::string to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::monolithic: return "monolithic";
        case Strategy::static_decomposition: return "static";
        case Strategy::rstd: return "rstd";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view text) {
    if (text == "monolithic") return Strategy::monolithic;
    if (text == "static") return Strategy::static_decomposition;
    if (text == "rstd") return Strategy::rstd;
    throw ParseError("unknown strategy '" + std::string(text) + "' (expected monolithic, static, or rstd)");
}

const InputKey* SubtaskSpec::input(std::string_view key) const {
    for (const auto& k : input_keys) {
        if (k.key == key) {
            return &k;
        }
    }
    return nullptr;
}

const SubtaskSpec* PipelineSpec::find(std::string_view id) const {
    for (const auto& s : subtasks) {
        if (s.id == id) {
            return &s;
        }
    }
    return nullptr;
}

const SubtaskSpec& PipelineSpec::at(std::string_view id) const {
    if (const auto* s = find(id)) {
        return *s;
    }
    throw UnknownSubtask(std::string(id));
}

std::size_t PipelineSpec::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < subtasks.size(); ++i) {
        if (subtasks[i].id == id) {
            return i;
        }
    }
    throw UnknownSubtask(std::string(id));
}

// ---------------------------------------------------------------------------
// Reading

namespace {

void reject_unknown(const ojson& doc, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : doc.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw SpecError(where.empty() ? key : where + "." + key, "unknown field");
        }
    }
}

const ojson& member(const ojson& doc, const char* name, const std::string& where) {
    if (!doc.contains(name)) {
        throw SpecError(where.empty() ? name : where + "." + name, "missing required field");
    }
    return doc[name];
}

std::string string_field(const ojson& doc, const char* name, const std::string& where) {
    const auto& v = member(doc, name, where);
    if (!v.is_string()) {
        throw SpecError(where.empty() ? name : where + "." + name, "must be a string");
    }
    return v.get<std::string>();
}

std::vector<std::string> id_list(const ojson& v, const std::string& where) {
    if (!v.is_array()) {
        throw SpecError(where, "must be an array of subtask ids");
    }
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) {
            throw SpecError(where, "must be an array of subtask ids");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

ValuePath path_field(const ojson& v, const std::string& where) {
    if (!v.is_string()) {
        throw SpecError(where, "must be a value path string");
    }
    try {
        return ValuePath::parse(v.get<std::string>());
    } catch (const ParseError& e) {
        throw SpecError(where, e.what());
    }
}

SubtaskSpec read_subtask(const ojson& doc, const std::string& where) {
    if (!doc.is_object()) {
        throw SpecError(where, "must be an object");
    }
    reject_unknown(doc, where,
                   {"id", "name", "prompt_template", "input_keys", "output_schema", "confidence_path",
                    "confidence_threshold", "model_ref", "failure_policy"});
    SubtaskSpec s;
    s.id = string_field(doc, "id", where);
    s.name = string_field(doc, "name", where);
    s.prompt_template = string_field(doc, "prompt_template", where);
    s.model_ref = string_field(doc, "model_ref", where);

    const auto& keys = member(doc, "input_keys", where);
    if (!keys.is_array()) {
        throw SpecError(where + ".input_keys", "must be an array");
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto at = fmt::format("{}.input_keys[{}]", where, i);
        if (!keys[i].is_object()) {
            throw SpecError(at, "must be an object");
        }
        reject_unknown(keys[i], at, {"key", "source", "required"});
        InputKey k;
        k.key = string_field(keys[i], "key", at);
        k.source = string_field(keys[i], "source", at);
        if (keys[i].contains("required")) {
            if (!keys[i]["required"].is_boolean()) {
                throw SpecError(at + ".required", "must be a boolean");
            }
            k.required = keys[i]["required"].get<bool>();
        }
        s.input_keys.push_back(std::move(k));
    }

    s.output_schema = parse_schema(member(doc, "output_schema", where), where + ".output_schema");

    if (doc.contains("confidence_path")) {
        s.confidence_path = path_field(doc["confidence_path"], where + ".confidence_path");
    }
    if (doc.contains("confidence_threshold")) {
        if (!doc["confidence_threshold"].is_number()) {
            throw SpecError(where + ".confidence_threshold", "must be a number");
        }
        s.confidence_threshold = doc["confidence_threshold"].get<double>();
    }

    if (doc.contains("failure_policy")) {
        const auto& fp = doc["failure_policy"];
        const auto at = where + ".failure_policy";
        if (!fp.is_object()) {
            throw SpecError(at, "must be an object");
        }
        reject_unknown(fp, at, {"max_repair_attempts", "rstd_retry_set", "static_retry_set"});
        FailurePolicyConfig cfg;
        if (fp.contains("max_repair_attempts")) {
            if (!fp["max_repair_attempts"].is_number_integer()) {
                throw SpecError(at + ".max_repair_attempts", "must be an integer");
            }
            const auto n = fp["max_repair_attempts"].get<std::int64_t>();
            if (n < 1) {
                throw SpecError(at + ".max_repair_attempts", "must be >= 1");
            }
            cfg.max_repair_attempts = static_cast<std::uint32_t>(n);
        }
        if (fp.contains("rstd_retry_set")) {
            cfg.rstd_retry_set = id_list(fp["rstd_retry_set"], at + ".rstd_retry_set");
        }
        if (fp.contains("static_retry_set")) {
            cfg.static_retry_set = id_list(fp["static_retry_set"], at + ".static_retry_set");
        }
        s.failure_policy = std::move(cfg);
    }
    return s;
}

}  // namespace

PipelineSpec parse_pipeline(std::string_view document) {
    ojson doc;
    try {
        doc = ojson::parse(document.begin(), document.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed pipeline document: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ParseError("pipeline document must be a JSON object");
    }
    reject_unknown(doc, "", {"id", "root_inputs", "subtasks", "edges", "monolithic_prompt", "ground_truth"});

    PipelineSpec p;
    p.id = string_field(doc, "id", "");

    if (doc.contains("root_inputs")) {
        if (!doc["root_inputs"].is_object()) {
            throw SpecError("root_inputs", "must be an object of strings");
        }
        for (const auto& [k, v] : doc["root_inputs"].items()) {
            if (!v.is_string()) {
                throw SpecError("root_inputs." + k, "must be a string");
            }
            p.root_inputs.emplace(k, v.get<std::string>());
        }
    }

    const auto& subtasks = member(doc, "subtasks", "");
    if (!subtasks.is_array()) {
        throw SpecError("subtasks", "must be an array");
    }
    for (std::size_t i = 0; i < subtasks.size(); ++i) {
        p.subtasks.push_back(read_subtask(subtasks[i], fmt::format("subtasks[{}]", i)));
    }

    if (doc.contains("edges")) {
        const auto& edges = doc["edges"];
        if (!edges.is_array()) {
            throw SpecError("edges", "must be an array");
        }
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto at = fmt::format("edges[{}]", i);
            if (!edges[i].is_object()) {
                throw SpecError(at, "must be an object");
            }
            reject_unknown(edges[i], at, {"from", "to", "skip_arc"});
            Edge e;
            e.from = string_field(edges[i], "from", at);
            e.to = string_field(edges[i], "to", at);
            if (edges[i].contains("skip_arc")) {
                if (!edges[i]["skip_arc"].is_boolean()) {
                    throw SpecError(at + ".skip_arc", "must be a boolean");
                }
                e.skip_arc = edges[i]["skip_arc"].get<bool>();
            }
            p.edges.push_back(std::move(e));
        }
    }

    if (doc.contains("monolithic_prompt")) {
        if (!doc["monolithic_prompt"].is_string()) {
            throw SpecError("monolithic_prompt", "must be a string");
        }
        p.monolithic_prompt = doc["monolithic_prompt"].get<std::string>();
    }

    if (doc.contains("ground_truth")) {
        const auto& gt = doc["ground_truth"];
        if (!gt.is_object()) {
            throw SpecError("ground_truth", "must be an object");
        }
        reject_unknown(gt, "ground_truth", {"subtask", "path", "expected"});
        GroundTruth g;
        g.subtask = string_field(gt, "subtask", "ground_truth");
        g.path = path_field(member(gt, "path", "ground_truth"), "ground_truth.path");
        g.expected = string_field(gt, "expected", "ground_truth");
        p.ground_truth = std::move(g);
    }

    check_pipeline(p);
    return p;
}

std::string serialize_pipeline(const PipelineSpec& p) {
    ojson doc;
    doc["id"] = p.id;
    doc["root_inputs"] = ojson::object();
    for (const auto& [k, v] : p.root_inputs) {
        doc["root_inputs"][k] = v;
    }
    doc["subtasks"] = ojson::array();
    for (const auto& s : p.subtasks) {
        ojson st;
        st["id"] = s.id;
        st["name"] = s.name;
        st["prompt_template"] = s.prompt_template;
        st["input_keys"] = ojson::array();
        for (const auto& k : s.input_keys) {
            st["input_keys"].push_back({{"key", k.key}, {"source", k.source}, {"required", k.required}});
        }
        st["output_schema"] = schema_to_json(s.output_schema);
        if (s.confidence_path) {
            st["confidence_path"] = s.confidence_path->str();
        }
        if (s.confidence_threshold) {
            st["confidence_threshold"] = *s.confidence_threshold;
        }
        st["model_ref"] = s.model_ref;
        if (s.failure_policy) {
            ojson fp = ojson::object();
            if (s.failure_policy->max_repair_attempts) {
                fp["max_repair_attempts"] = *s.failure_policy->max_repair_attempts;
            }
            if (s.failure_policy->rstd_retry_set) {
                fp["rstd_retry_set"] = *s.failure_policy->rstd_retry_set;
            }
            if (s.failure_policy->static_retry_set) {
                fp["static_retry_set"] = *s.failure_policy->static_retry_set;
            }
            st["failure_policy"] = std::move(fp);
        }
        doc["subtasks"].push_back(std::move(st));
    }
    doc["edges"] = ojson::array();
    for (const auto& e : p.edges) {
        doc["edges"].push_back({{"from", e.from}, {"to", e.to}, {"skip_arc", e.skip_arc}});
    }
    if (p.monolithic_prompt) {
        doc["monolithic_prompt"] = *p.monolithic_prompt;
    }
    if (p.ground_truth) {
        doc["ground_truth"] = {{"subtask", p.ground_truth->subtask},
                               {"path", p.ground_truth->path.str()},
                               {"expected", p.ground_truth->expected}};
    }
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Graph

namespace {

// Adjacency over subtask indices; root edges dropped.
std::vector<std::vector<std::size_t>> successors(const PipelineSpec& p) {
    std::vector<std::vector<std::size_t>> out(p.subtasks.size());
    for (const auto& e : p.edges) {
        if (e.from == kRootSource) {
            continue;
        }
        out[p.index_of(e.from)].push_back(p.index_of(e.to));
    }
    return out;
}

std::vector<std::string> find_cycle(const PipelineSpec& p) {
    const auto next = successors(p);
    enum class Mark { white, grey, black };
    std::vector<Mark> mark(p.subtasks.size(), Mark::white);
    std::vector<std::size_t> stack;
    std::vector<std::string> cycle;
    std::function<bool(std::size_t)> visit = [&](std::size_t n) {
        mark[n] = Mark::grey;
        stack.push_back(n);
        for (auto m : next[n]) {
            if (mark[m] == Mark::grey) {
                auto it = std::find(stack.begin(), stack.end(), m);
                for (; it != stack.end(); ++it) {
                    cycle.push_back(p.subtasks[*it].id);
                }
                return true;
            }
            if (mark[m] == Mark::white && visit(m)) {
                return true;
            }
        }
        stack.pop_back();
        mark[n] = Mark::black;
        return false;
    };
    for (std::size_t n = 0; n < p.subtasks.size(); ++n) {
        if (mark[n] == Mark::white && visit(n)) {
            break;
        }
    }
    return cycle;
}

std::set<std::string> reachable(const PipelineSpec& p, std::size_t start,
                                const std::vector<std::vector<std::size_t>>& adjacency) {
    std::vector<bool> seen(p.subtasks.size(), false);
    std::vector<std::size_t> work{start};
    std::set<std::string> out;
    while (!work.empty()) {
        const auto n = work.back();
        work.pop_back();
        for (auto m : adjacency[n]) {
            if (!seen[m]) {
                seen[m] = true;
                out.insert(p.subtasks[m].id);
                work.push_back(m);
            }
        }
    }
    out.erase(p.subtasks[start].id);
    return out;
}

}  // namespace

void check_pipeline(const PipelineSpec& p) {
    if (p.id.empty()) {
        throw SpecError("id", "must be non-empty");
    }
    if (p.subtasks.empty()) {
        throw SpecError("subtasks", "at least one subtask is required");
    }
    std::set<std::string> ids;
    for (std::size_t i = 0; i < p.subtasks.size(); ++i) {
        const auto& s = p.subtasks[i];
        const auto at = fmt::format("subtasks[{}]", i);
        if (s.id.empty() || s.id == kRootSource || s.id == kMonolithicKey) {
            throw SpecError(at + ".id", "'" + s.id + "' is not a usable subtask id");
        }
        if (!ids.insert(s.id).second) {
            throw SpecError(at + ".id", "duplicate subtask id '" + s.id + "'");
        }
        if (s.model_ref.empty()) {
            throw SpecError(at + ".model_ref", "must be non-empty");
        }
    }

    for (std::size_t i = 0; i < p.edges.size(); ++i) {
        const auto& e = p.edges[i];
        const auto at = fmt::format("edges[{}]", i);
        if (e.from != kRootSource && !ids.contains(e.from)) {
            throw SpecError(at + ".from", "unknown subtask '" + e.from + "'");
        }
        if (!ids.contains(e.to)) {
            throw SpecError(at + ".to", "unknown subtask '" + e.to + "'");
        }
        if (e.from == e.to) {
            throw SpecError(at, "self edge on '" + e.to + "'");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (p.edges[j].from == e.from && p.edges[j].to == e.to) {
                throw SpecError(at, "duplicate edge " + e.from + " -> " + e.to);
            }
        }
    }
    if (auto cycle = find_cycle(p); !cycle.empty()) {
        throw CycleError(std::move(cycle));
    }

    const auto has_edge = [&](const std::string& from, const std::string& to) {
        return std::any_of(p.edges.begin(), p.edges.end(),
                           [&](const Edge& e) { return e.from == from && e.to == to; });
    };

    for (std::size_t i = 0; i < p.subtasks.size(); ++i) {
        const auto& s = p.subtasks[i];
        const auto at = fmt::format("subtasks[{}]", i);
        std::set<std::string> keys;
        for (std::size_t k = 0; k < s.input_keys.size(); ++k) {
            const auto& in = s.input_keys[k];
            const auto kat = fmt::format("{}.input_keys[{}]", at, k);
            if (in.key.empty() || !keys.insert(in.key).second) {
                throw SpecError(kat + ".key", "empty or duplicate input key '" + in.key + "'");
            }
            if (in.from_root()) {
                if (!p.root_inputs.contains(in.key)) {
                    throw SpecError(kat + ".source", "root input '" + in.key + "' is not defined in root_inputs");
                }
            } else if (!ids.contains(in.source)) {
                throw SpecError(kat + ".source", "unknown source '" + in.source + "'");
            } else if (in.source == s.id) {
                throw SpecError(kat + ".source", "a subtask cannot consume its own output");
            } else if (!has_edge(in.source, s.id)) {
                throw SpecError(kat + ".source", "no edge " + in.source + " -> " + s.id + " carries this input");
            }
        }
        for (const auto& name : placeholders(s.prompt_template)) {
            if (!keys.contains(name)) {
                throw SpecError(at + ".prompt_template", "placeholder {" + name + "} has no input key");
            }
        }
        if (s.confidence_path.has_value() != s.confidence_threshold.has_value()) {
            throw SpecError(at + ".confidence_threshold",
                            "confidence_path and confidence_threshold must be given together");
        }
        if (s.confidence_threshold && (*s.confidence_threshold < 0.0 || *s.confidence_threshold > 1.0)) {
            throw SpecError(at + ".confidence_threshold", "must lie in [0, 1]");
        }
        if (s.failure_policy) {
            const auto ancestors = upstream_closure(p, s.id);
            const auto check_set = [&](const std::optional<std::vector<std::string>>& set, const char* name) {
                if (!set) {
                    return;
                }
                const auto fat = at + ".failure_policy." + name;
                if (set->empty()) {
                    throw SpecError(fat, "retry set must be non-empty");
                }
                bool anchored = false;
                for (const auto& id : *set) {
                    if (!ids.contains(id)) {
                        throw SpecError(fat, "unknown subtask '" + id + "'");
                    }
                    anchored = anchored || id == s.id || ancestors.contains(id);
                }
                if (!anchored) {
                    throw SpecError(fat, "must contain '" + s.id + "' or one of its ancestors");
                }
            };
            check_set(s.failure_policy->rstd_retry_set, "rstd_retry_set");
            check_set(s.failure_policy->static_retry_set, "static_retry_set");
            if (s.failure_policy->max_repair_attempts && *s.failure_policy->max_repair_attempts < 1) {
                throw SpecError(at + ".failure_policy.max_repair_attempts", "must be >= 1");
            }
        }
    }

    if (p.ground_truth && !ids.contains(p.ground_truth->subtask)) {
        throw SpecError("ground_truth.subtask", "unknown subtask '" + p.ground_truth->subtask + "'");
    }
}

std::vector<std::string> topological_order(const PipelineSpec& p) {
    const auto next = successors(p);
    std::vector<std::size_t> indegree(p.subtasks.size(), 0);
    for (const auto& outs : next) {
        for (auto m : outs) {
            ++indegree[m];
        }
    }
    std::set<std::size_t> ready;  // ordered by declaration index
    for (std::size_t n = 0; n < indegree.size(); ++n) {
        if (indegree[n] == 0) {
            ready.insert(n);
        }
    }
    std::vector<std::string> order;
    while (!ready.empty()) {
        const auto n = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(p.subtasks[n].id);
        for (auto m : next[n]) {
            if (--indegree[m] == 0) {
                ready.insert(m);
            }
        }
    }
    if (order.size() != p.subtasks.size()) {
        throw CycleError(find_cycle(p));
    }
    return order;
}

std::set<std::string> downstream_closure(const PipelineSpec& p, std::string_view id) {
    return reachable(p, p.index_of(id), successors(p));
}

std::set<std::string> upstream_closure(const PipelineSpec& p, std::string_view id) {
    const auto next = successors(p);
    std::vector<std::vector<std::size_t>> prev(next.size());
    for (std::size_t n = 0; n < next.size(); ++n) {
        for (auto m : next[n]) {
            prev[m].push_back(n);
        }
    }
    return reachable(p, p.index_of(id), prev);
}

std::vector<std::string> in_topological_order(const PipelineSpec& p, const std::set<std::string>& ids) {
    std::vector<std::string> out;
    for (const auto& id : topological_order(p)) {
        if (ids.contains(id)) {
            out.push_back(id);
        }
    }
    return out;
}

FailurePolicy resolve_failure_policy(const PipelineSpec& p, std::string_view id) {
    const auto& s = p.at(id);
    FailurePolicy policy;
    policy.rstd_retry_set = {s.id};
    auto static_set = downstream_closure(p, id);
    static_set.insert(s.id);
    policy.static_retry_set = in_topological_order(p, static_set);

    if (const auto& cfg = s.failure_policy) {
        if (cfg->max_repair_attempts) {
            policy.max_repair_attempts = *cfg->max_repair_attempts;
        }
        if (cfg->rstd_retry_set) {
            policy.rstd_retry_set =
                in_topological_order(p, {cfg->rstd_retry_set->begin(), cfg->rstd_retry_set->end()});
        }
        if (cfg->static_retry_set) {
            policy.static_retry_set =
                in_topological_order(p, {cfg->static_retry_set->begin(), cfg->static_retry_set->end()});
        }
    }
    return policy;
}

std::vector<std::string> skip_targets(const PipelineSpec& p, std::string_view id) {
    std::vector<std::string> targets;
    for (const auto& arc : p.edges) {
        if (!arc.skip_arc || arc.from != id) {
            continue;
        }
        for (const auto& e : p.edges) {
            if (e.from != id || e.to == arc.to) {
                continue;
            }
            if (downstream_closure(p, e.to).contains(arc.to) &&
                std::find(targets.begin(), targets.end(), e.to) == targets.end()) {
                targets.push_back(e.to);
            }
        }
    }
    return targets;
}

std::vector<std::string> placeholders(std::string_view t) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == '{' && i + 1 < t.size() && t[i + 1] == '{') {
            ++i;
            continue;
        }
        if (t[i] != '{') {
            continue;
        }
        std::size_t j = i + 1;
        while (j < t.size() && (std::isalnum(static_cast<unsigned char>(t[j])) || t[j] == '_')) {
            ++j;
        }
        if (j > i + 1 && j < t.size() && t[j] == '}' && !std::isdigit(static_cast<unsigned char>(t[i + 1]))) {
            std::string name(t.substr(i + 1, j - i - 1));
            if (std::find(out.begin(), out.end(), name) == out.end()) {
                out.push_back(std::move(name));
            }
            i = j;
        }
    }
    return out;
}

std::string render_template(std::string_view t, const std::map<std::string, std::string>& context) {
    std::string out;
    out.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const char c = t[i];
        if ((c == '{' || c == '}') && i + 1 < t.size() && t[i + 1] == c) {
            out += c;
            ++i;
            continue;
        }
        if (c == '{') {
            std::size_t j = i + 1;
            while (j < t.size() && (std::isalnum(static_cast<unsigned char>(t[j])) || t[j] == '_')) {
                ++j;
            }
            if (j > i + 1 && j < t.size() && t[j] == '}') {
                auto it = context.find(std::string(t.substr(i + 1, j - i - 1)));
                if (it != context.end()) {
                    out += it->second;
                    i = j;
                    continue;
                }
            }
        }
        out += c;
    }
    return out;
}

}  // namespace rstd
