#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace rstd {

// Model outputs and stored state. Keys serialize in sorted order, so dump()
// is a deterministic function of the value.
using JsonValue = nlohmann::json;

// Parses the first well-formed JSON value embedded in `text`. Prose before or
// after the value is ignored. Throws NoParsableValue.
JsonValue parse_value(std::string_view text);

// Compact, deterministic serialization.
std::string serialize(const JsonValue& value);

// A location inside a JsonValue: "$", "$.a", "$[0].confidence", "$[\"odd key\"]".
class ValuePath {
public:
    using Step = std::variant<std::string, std::size_t>;

    ValuePath() = default;
    explicit ValuePath(std::vector<Step> steps) : steps_(std::move(steps)) {}

    // Throws ParseError on malformed syntax.
    static ValuePath parse(std::string_view text);

    const std::vector<Step>& steps() const noexcept { return steps_; }
    bool is_root() const noexcept { return steps_.empty(); }

    ValuePath child(std::string key) const;
    ValuePath child(std::size_t index) const;

    std::string str() const;

    // nullptr when any step is missing or of the wrong container kind.
    const JsonValue* find(const JsonValue& root) const;

    // Removes the addressed member or element. Throws PathNotFound; the root
    // itself cannot be removed.
    void erase(JsonValue& root) const;

    bool operator==(const ValuePath&) const = default;

private:
    std::vector<Step> steps_;
};

}  // namespace rstd
