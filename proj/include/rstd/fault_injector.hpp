#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rstd/json_value.hpp"
#include "rstd/pipeline.hpp"

namespace rstd {

enum class InjectionMode {
    // Remove a field from the target's assembled upstream input. The path is
    // rooted at the context object {input_key: value, ...}.
    drop_field,
    // Remove a field from the target's raw output before it is parsed.
    corrupt_response,
};

std::string to_string(InjectionMode mode);

// Single-shot simulated failure: fires on exactly one (target, attempt).
struct InjectionSpec {
    std::string target;
    std::uint32_t attempt = 1;
    InjectionMode mode = InjectionMode::corrupt_response;
    ValuePath path;

    bool operator==(const InjectionSpec&) const = default;
};

// Parses the CLI form: target=<id> attempt=<n> mode=<drop_field|corrupt_response>
// path=<value-path>. Throws ParseError.
InjectionSpec parse_injection(const std::vector<std::string>& tokens);
std::string format_injection(const InjectionSpec& spec);

// Target must be a pipeline subtask or "monolithic"; path must not be "$".
// Throws SpecError.
void check_injection(const InjectionSpec& spec, const PipelineSpec& pipeline);

bool should_inject(const InjectionSpec& spec, std::string_view subtask, std::uint32_t attempt);

// Returns `value` with the field at spec.path removed. Throws PathNotFound.
JsonValue apply_injection(const InjectionSpec& spec, JsonValue value);

// Raw-text variant: parses, drops the field, re-serializes. Text without a
// parsable value, or without the path, throws PathNotFound.
std::string apply_injection(const InjectionSpec& spec, std::string_view raw_text);

}  // namespace rstd
