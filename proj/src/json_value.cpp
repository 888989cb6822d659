#include "rstd/json_value.hpp"

#include <cctype>
#include <optional>

#include "rstd/errors.hpp"

namespace rstd {

namespace {

std::optional<JsonValue> try_parse(std::string_view text) {
    auto parsed = JsonValue::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) {
        return std::nullopt;
    }
    return parsed;
}

// Index one past the bracket that closes the one at `open`, honoring string
// literals and escapes. npos when unbalanced.
std::size_t matching_close(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        switch (c) {
            case '"': in_string = true; break;
            case '{':
            case '[': ++depth; break;
            case '}':
            case ']':
                if (--depth == 0) {
                    return i + 1;
                }
                break;
            default: break;
        }
    }
    return std::string_view::npos;
}

bool is_identifier(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) {
        return false;
    }
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
            return false;
        }
    }
    return true;
}

}  // namespace

JsonValue parse_value(std::string_view text) {
    if (auto whole = try_parse(text)) {
        return *whole;
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') {
            continue;
        }
        const auto end = matching_close(text, i);
        if (end == std::string_view::npos) {
            continue;
        }
        if (auto value = try_parse(text.substr(i, end - i))) {
            return *value;
        }
    }
    throw NoParsableValue();
}

std::string serialize(const JsonValue& value) { return value.dump(); }

ValuePath ValuePath::parse(std::string_view text) {
    if (text.empty() || text[0] != '$') {
        throw ParseError("value path must start with '$': '" + std::string(text) + "'");
    }
    std::vector<Step> steps;
    std::size_t i = 1;
    const auto fail = [&](const char* why) {
        throw ParseError(std::string("bad value path '") + std::string(text) + "': " + why);
    };
    while (i < text.size()) {
        if (text[i] == '.') {
            std::size_t j = i + 1;
            while (j < text.size() && text[j] != '.' && text[j] != '[') {
                ++j;
            }
            if (j == i + 1) {
                fail("empty member name");
            }
            steps.emplace_back(std::string(text.substr(i + 1, j - i - 1)));
            i = j;
        } else if (text[i] == '[') {
            const auto close = text.find(']', i);
            if (close == std::string_view::npos) {
                fail("unterminated '['");
            }
            const auto inner = text.substr(i + 1, close - i - 1);
            if (!inner.empty() && inner.front() == '"') {
                // Quoted key; may itself contain ']', so re-scan as a JSON string.
                std::size_t k = i + 2;
                while (k < text.size() && text[k] != '"') {
                    k += text[k] == '\\' ? 2 : 1;
                }
                if (k + 1 >= text.size() || text[k + 1] != ']') {
                    fail("unterminated quoted key");
                }
                auto key = try_parse(text.substr(i + 1, k - i));
                if (!key || !key->is_string()) {
                    fail("bad quoted key");
                }
                steps.emplace_back(key->get<std::string>());
                i = k + 2;
                continue;
            }
            if (inner.empty()) {
                fail("empty index");
            }
            std::size_t index = 0;
            for (char c : inner) {
                if (!std::isdigit(static_cast<unsigned char>(c))) {
                    fail("non-numeric index");
                }
                index = index * 10 + static_cast<std::size_t>(c - '0');
            }
            steps.emplace_back(index);
            i = close + 1;
        } else {
            fail("expected '.' or '['");
        }
    }
    return ValuePath(std::move(steps));
}

ValuePath ValuePath::child(std::string key) const {
    auto steps = steps_;
    steps.emplace_back(std::move(key));
    return ValuePath(std::move(steps));
}

ValuePath ValuePath::child(std::size_t index) const {
    auto steps = steps_;
    steps.emplace_back(index);
    return ValuePath(std::move(steps));
}

std::string ValuePath::str() const {
    std::string out = "$";
    for (const auto& step : steps_) {
        if (const auto* key = std::get_if<std::string>(&step)) {
            if (is_identifier(*key)) {
                out += "." + *key;
            } else {
                out += "[" + JsonValue(*key).dump() + "]";
            }
        } else {
            out += "[" + std::to_string(std::get<std::size_t>(step)) + "]";
        }
    }
    return out;
}

const JsonValue* ValuePath::find(const JsonValue& root) const {
    const JsonValue* node = &root;
    for (const auto& step : steps_) {
        if (const auto* key = std::get_if<std::string>(&step)) {
            if (!node->is_object()) {
                return nullptr;
            }
            auto it = node->find(*key);
            if (it == node->end()) {
                return nullptr;
            }
            node = &*it;
        } else {
            const auto index = std::get<std::size_t>(step);
            if (!node->is_array() || index >= node->size()) {
                return nullptr;
            }
            node = &(*node)[index];
        }
    }
    return node;
}

void ValuePath::erase(JsonValue& root) const {
    if (steps_.empty()) {
        throw PathNotFound(str());
    }
    const ValuePath parent(std::vector<Step>(steps_.begin(), steps_.end() - 1));
    auto* container = const_cast<JsonValue*>(parent.find(root));
    if (container == nullptr || find(root) == nullptr) {
        throw PathNotFound(str());
    }
    const auto& last = steps_.back();
    if (const auto* key = std::get_if<std::string>(&last)) {
        container->erase(*key);
    } else {
        container->erase(std::get<std::size_t>(last));
    }
}

}  // namespace rstd
