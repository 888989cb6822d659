#include "rstd/schema.hpp"

#include <set>

#include <fmt/format.h>

#include "rstd/errors.hpp"

namespace rstd {

using ojson = nlohmann::ordered_json;

std::string to_string(SchemaKind kind) {
    switch (kind) {
        case SchemaKind::object: return "object";
        case SchemaKind::array: return "array";
        case SchemaKind::string: return "string";
        case SchemaKind::number: return "number";
        case SchemaKind::boolean: return "boolean";
        case SchemaKind::enumeration: return "enum";
    }
    return "unknown";
}

bool SchemaNode::is_required(const std::string& name) const {
    for (const auto& r : required) {
        if (r == name) {
            return true;
        }
    }
    return false;
}

bool operator==(const SchemaNode& a, const SchemaNode& b) {
    if (a.kind != b.kind || a.properties != b.properties || a.required != b.required ||
        a.min_items != b.min_items || a.minimum != b.minimum || a.maximum != b.maximum ||
        a.values != b.values) {
        return false;
    }
    if (static_cast<bool>(a.items) != static_cast<bool>(b.items)) {
        return false;
    }
    return !a.items || *a.items == *b.items;
}

namespace {

SchemaKind parse_kind(const ojson& doc, const std::string& where) {
    if (!doc.contains("kind") || !doc["kind"].is_string()) {
        throw SpecError(where + ".kind", "missing or not a string");
    }
    const auto k = doc["kind"].get<std::string>();
    if (k == "object") return SchemaKind::object;
    if (k == "array") return SchemaKind::array;
    if (k == "string") return SchemaKind::string;
    if (k == "number") return SchemaKind::number;
    if (k == "boolean") return SchemaKind::boolean;
    if (k == "enum") return SchemaKind::enumeration;
    throw SpecError(where + ".kind", "unknown schema kind '" + k + "'");
}

void reject_unknown(const ojson& doc, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : doc.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw SpecError(where + "." + key, "unknown field for this schema kind");
        }
    }
}

std::string json_type_name(const JsonValue& v) {
    if (v.is_object()) return "object";
    if (v.is_array()) return "array";
    if (v.is_string()) return "string";
    if (v.is_number()) return "number";
    if (v.is_boolean()) return "boolean";
    return "null";
}

bool kind_matches(const JsonValue& v, SchemaKind kind) {
    switch (kind) {
        case SchemaKind::object: return v.is_object();
        case SchemaKind::array: return v.is_array();
        case SchemaKind::string:
        case SchemaKind::enumeration: return v.is_string();
        case SchemaKind::number: return v.is_number();
        case SchemaKind::boolean: return v.is_boolean();
    }
    return false;
}

void validate_into(const JsonValue& value, const SchemaNode& schema, const ValuePath& path,
                   std::vector<ValidationIssue>& out) {
    if (!kind_matches(value, schema.kind)) {
        out.push_back({path.str(), to_string(schema.kind), json_type_name(value)});
        return;
    }
    switch (schema.kind) {
        case SchemaKind::object:
            for (const auto& [name, child] : schema.properties) {
                auto it = value.find(name);
                if (it == value.end()) {
                    if (schema.is_required(name)) {
                        out.push_back({path.child(name).str(), "required " + to_string(child.kind), "absent"});
                    }
                    continue;
                }
                validate_into(*it, child, path.child(name), out);
            }
            break;
        case SchemaKind::array:
            if (schema.min_items && value.size() < *schema.min_items) {
                out.push_back({path.str(), fmt::format("at least {} items", *schema.min_items),
                               fmt::format("{} items", value.size())});
            }
            if (schema.items) {
                for (std::size_t i = 0; i < value.size(); ++i) {
                    validate_into(value[i], *schema.items, path.child(i), out);
                }
            }
            break;
        case SchemaKind::number: {
            const double x = value.get<double>();
            if (schema.minimum && x < *schema.minimum) {
                out.push_back({path.str(), fmt::format("number >= {}", *schema.minimum), value.dump()});
            } else if (schema.maximum && x > *schema.maximum) {
                out.push_back({path.str(), fmt::format("number <= {}", *schema.maximum), value.dump()});
            }
            break;
        }
        case SchemaKind::enumeration: {
            const auto& s = value.get_ref<const std::string&>();
            bool ok = false;
            for (const auto& allowed : schema.values) {
                ok = ok || allowed == s;
            }
            if (!ok) {
                out.push_back({path.str(), "one of " + JsonValue(schema.values).dump(), value.dump()});
            }
            break;
        }
        case SchemaKind::string:
        case SchemaKind::boolean: break;
    }
}

}  // namespace

SchemaNode parse_schema(const ojson& doc, const std::string& where) {
    if (!doc.is_object()) {
        throw SpecError(where, "schema must be an object");
    }
    SchemaNode node;
    node.kind = parse_kind(doc, where);
    switch (node.kind) {
        case SchemaKind::object: {
            reject_unknown(doc, where, {"kind", "properties", "required"});
            if (doc.contains("properties")) {
                if (!doc["properties"].is_object()) {
                    throw SpecError(where + ".properties", "must be an object");
                }
                for (const auto& [name, child] : doc["properties"].items()) {
                    node.properties.emplace_back(name, parse_schema(child, where + ".properties." + name));
                }
            }
            if (doc.contains("required")) {
                const auto& req = doc["required"];
                if (!req.is_array()) {
                    throw SpecError(where + ".required", "must be an array of names");
                }
                std::set<std::string> seen;
                for (std::size_t i = 0; i < req.size(); ++i) {
                    const auto at = fmt::format("{}.required[{}]", where, i);
                    if (!req[i].is_string()) {
                        throw SpecError(at, "must be a string");
                    }
                    auto name = req[i].get<std::string>();
                    bool declared = false;
                    for (const auto& [p, _] : node.properties) {
                        declared = declared || p == name;
                    }
                    if (!declared) {
                        throw SpecError(at, "required name '" + name + "' is not a declared property");
                    }
                    if (seen.insert(name).second) {
                        node.required.push_back(std::move(name));
                    }
                }
            }
            break;
        }
        case SchemaKind::array:
            reject_unknown(doc, where, {"kind", "items", "min_items"});
            if (doc.contains("items")) {
                node.items = std::make_shared<const SchemaNode>(parse_schema(doc["items"], where + ".items"));
            }
            if (doc.contains("min_items")) {
                if (!doc["min_items"].is_number_unsigned()) {
                    throw SpecError(where + ".min_items", "must be a non-negative integer");
                }
                node.min_items = doc["min_items"].get<std::size_t>();
            }
            break;
        case SchemaKind::number:
            reject_unknown(doc, where, {"kind", "minimum", "maximum"});
            for (const char* bound : {"minimum", "maximum"}) {
                if (doc.contains(bound)) {
                    if (!doc[bound].is_number()) {
                        throw SpecError(where + "." + bound, "must be a number");
                    }
                    (std::string_view(bound) == "minimum" ? node.minimum : node.maximum) = doc[bound].get<double>();
                }
            }
            if (node.minimum && node.maximum && *node.minimum > *node.maximum) {
                throw SpecError(where, "minimum exceeds maximum");
            }
            break;
        case SchemaKind::enumeration:
            reject_unknown(doc, where, {"kind", "values"});
            if (!doc.contains("values") || !doc["values"].is_array() || doc["values"].empty()) {
                throw SpecError(where + ".values", "enum needs a non-empty list of strings");
            }
            for (const auto& v : doc["values"]) {
                if (!v.is_string()) {
                    throw SpecError(where + ".values", "enum values must be strings");
                }
                node.values.push_back(v.get<std::string>());
            }
            break;
        case SchemaKind::string:
        case SchemaKind::boolean: reject_unknown(doc, where, {"kind"}); break;
    }
    return node;
}

ojson schema_to_json(const SchemaNode& schema) {
    ojson out;
    out["kind"] = to_string(schema.kind);
    switch (schema.kind) {
        case SchemaKind::object:
            if (!schema.properties.empty()) {
                out["properties"] = ojson::object();
                for (const auto& [name, child] : schema.properties) {
                    out["properties"][name] = schema_to_json(child);
                }
            }
            if (!schema.required.empty()) {
                out["required"] = schema.required;
            }
            break;
        case SchemaKind::array:
            if (schema.items) {
                out["items"] = schema_to_json(*schema.items);
            }
            if (schema.min_items) {
                out["min_items"] = *schema.min_items;
            }
            break;
        case SchemaKind::number:
            if (schema.minimum) {
                out["minimum"] = *schema.minimum;
            }
            if (schema.maximum) {
                out["maximum"] = *schema.maximum;
            }
            break;
        case SchemaKind::enumeration: out["values"] = schema.values; break;
        case SchemaKind::string:
        case SchemaKind::boolean: break;
    }
    return out;
}

void ValidationReport::append(const ValidationReport& other) {
    errors.insert(errors.end(), other.errors.begin(), other.errors.end());
}

ValidationReport validate(const JsonValue& value, const SchemaNode& schema) {
    ValidationReport report;
    validate_into(value, schema, ValuePath{}, report.errors);
    return report;
}

ValidationReport unparsable_report() {
    return ValidationReport{{{"$", "a JSON value", "no parsable value"}}};
}

std::string build_repair_prompt(const std::string& original_prompt,
                                const std::string& raw_output,
                                const ValidationReport& report) {
    if (report.passed()) {
        throw PreconditionViolated("repair prompt requested for a passing validation report");
    }
    std::string out = original_prompt;
    out += "\n\n### VALIDATION ERRORS\n";
    out += "Your previous output failed schema validation. Correct only the violations listed "
           "below and return the complete corrected JSON.\n";
    for (const auto& e : report.errors) {
        out += fmt::format("- {}: expected {}, found {}\n", e.path, e.expected, e.found);
    }
    out += "### PREVIOUS OUTPUT\n";
    out += raw_output;
    out += "\n";
    return out;
}

bool check_content_signal(const JsonValue& value,
                          const std::optional<ValuePath>& confidence_path,
                          std::optional<double> threshold) {
    if (confidence_path) {
        if (!threshold) {
            throw PreconditionViolated("confidence path given without a threshold");
        }
        const JsonValue* node = confidence_path->find(value);
        return node != nullptr && node->is_number() && node->get<double>() >= *threshold;
    }
    if (value.is_string()) {
        return !value.get_ref<const std::string&>().empty();
    }
    if (value.is_array() || value.is_object()) {
        return !value.empty();
    }
    return value.is_number() || value.is_boolean();
}

}  // namespace rstd
