#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rstd/json_value.hpp"

namespace rstd {

enum class SchemaKind { object, array, string, number, boolean, enumeration };

std::string to_string(SchemaKind kind);

// Declarative output contract for one judgment call. A deliberately small
// subset of JSON Schema: object/array/string/number/boolean/enum with
// required members, min_items, and inclusive numeric bounds.
struct SchemaNode {
    SchemaKind kind = SchemaKind::object;
    // object: properties in declaration order.
    std::vector<std::pair<std::string, SchemaNode>> properties;
    std::vector<std::string> required;
    // array
    std::shared_ptr<const SchemaNode> items;
    std::optional<std::size_t> min_items;
    // number
    std::optional<double> minimum;
    std::optional<double> maximum;
    // enum
    std::vector<std::string> values;

    bool is_required(const std::string& name) const;

    friend bool operator==(const SchemaNode& a, const SchemaNode& b);
};

// Reads a schema from its config representation. Throws SpecError with a
// path relative to `where` on invariant violations.
SchemaNode parse_schema(const nlohmann::ordered_json& doc, const std::string& where);
nlohmann::ordered_json schema_to_json(const SchemaNode& schema);

struct ValidationIssue {
    std::string path;
    std::string expected;
    std::string found;

    bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
    std::vector<ValidationIssue> errors;

    bool passed() const noexcept { return errors.empty(); }

    void append(const ValidationReport& other);
};

// Depth-first, declaration-ordered structural check. Never throws for
// non-conforming values; violations are returned as data.
ValidationReport validate(const JsonValue& value, const SchemaNode& schema);

// Report produced when the raw output held no parsable value.
ValidationReport unparsable_report();

// original prompt + delimiter + serialized errors + previous raw output.
// Throws PreconditionViolated if the report passed.
std::string build_repair_prompt(const std::string& original_prompt,
                                const std::string& raw_output,
                                const ValidationReport& report);

// Content branching signal. With no confidence path: the value is non-empty.
// With one: the addressed number is >= threshold (inclusive).
bool check_content_signal(const JsonValue& value,
                          const std::optional<ValuePath>& confidence_path,
                          std::optional<double> threshold);

}  // namespace rstd
