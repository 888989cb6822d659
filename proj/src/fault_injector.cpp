#include "rstd/fault_injector.hpp"

#include <charconv>

#include "rstd/errors.hpp"

namespace rstd {

std::string to_string(InjectionMode mode) {
    return mode == InjectionMode::drop_field ? "drop_field" : "corrupt_response";
}

InjectionSpec parse_injection(const std::vector<std::string>& tokens) {
    InjectionSpec spec;
    bool have_target = false;
    bool have_path = false;
    for (const auto& token : tokens) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) {
            throw ParseError("injection directive '" + token + "' is not key=value");
        }
        const auto key = token.substr(0, eq);
        const auto value = token.substr(eq + 1);
        if (key == "target") {
            spec.target = value;
            have_target = !value.empty();
        } else if (key == "attempt") {
            unsigned n = 0;
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
            if (ec != std::errc{} || ptr != value.data() + value.size() || n < 1) {
                throw ParseError("injection attempt must be a positive integer, got '" + value + "'");
            }
            spec.attempt = n;
        } else if (key == "mode") {
            if (value == "drop_field") {
                spec.mode = InjectionMode::drop_field;
            } else if (value == "corrupt_response") {
                spec.mode = InjectionMode::corrupt_response;
            } else {
                throw ParseError("injection mode must be drop_field or corrupt_response, got '" + value + "'");
            }
        } else if (key == "path") {
            spec.path = ValuePath::parse(value);
            have_path = true;
        } else {
            throw ParseError("unknown injection directive '" + key + "'");
        }
    }
    if (!have_target || !have_path) {
        throw ParseError("injection needs target=<id> and path=<value-path>");
    }
    if (spec.path.is_root()) {
        throw ParseError("injection path must name a field, not '$'");
    }
    return spec;
}

std::string format_injection(const InjectionSpec& spec) {
    return "target=" + spec.target + " attempt=" + std::to_string(spec.attempt) + " mode=" + to_string(spec.mode) +
           " path=" + spec.path.str();
}

void check_injection(const InjectionSpec& spec, const PipelineSpec& pipeline) {
    if (spec.target != kMonolithicKey && pipeline.find(spec.target) == nullptr) {
        throw SpecError("inject.target", "unknown subtask '" + spec.target + "'");
    }
    if (spec.path.is_root()) {
        throw SpecError("inject.path", "must name a field, not '$'");
    }
    if (spec.attempt < 1) {
        throw SpecError("inject.attempt", "must be >= 1");
    }
}

bool should_inject(const InjectionSpec& spec, std::string_view subtask, std::uint32_t attempt) {
    return spec.target == subtask && spec.attempt == attempt;
}

JsonValue apply_injection(const InjectionSpec& spec, JsonValue value) {
    spec.path.erase(value);
    return value;
}

std::string apply_injection(const InjectionSpec& spec, std::string_view raw_text) {
    JsonValue value;
    try {
        value = parse_value(raw_text);
    } catch (const NoParsableValue&) {
        throw PathNotFound(spec.path.str());
    }
    return serialize(apply_injection(spec, std::move(value)));
}

}  // namespace rstd
