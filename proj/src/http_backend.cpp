#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rstd/backend.hpp"
#include "rstd/errors.hpp"

namespace rstd {

HttpConfig HttpConfig::parse(std::string_view document) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document.begin(), document.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed HTTP backend config: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ParseError("HTTP backend config must be an object");
    }
    HttpConfig c;
    for (const auto& [key, v] : doc.items()) {
        if (key == "base_url" && v.is_string()) {
            c.base_url = v.get<std::string>();
        } else if (key == "api_key_env" && v.is_string()) {
            c.api_key_env = v.get<std::string>();
        } else if (key == "model" && v.is_string()) {
            c.model = v.get<std::string>();
        } else if (key == "timeout_seconds" && v.is_number()) {
            c.timeout_seconds = v.get<double>();
        } else {
            throw ParseError("HTTP backend config: unknown or mistyped field '" + key + "'");
        }
    }
    if (c.base_url.empty() || c.model.empty()) {
        throw ParseError("HTTP backend config needs base_url and model");
    }
    if (c.timeout_seconds <= 0.0) {
        throw ParseError("HTTP backend config: timeout_seconds must be positive");
    }
    return c;
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ParseError("base_url needs a scheme: '" + config_.base_url + "'");
    }
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_port_ = config_.base_url;
    } else {
        scheme_host_port_ = config_.base_url.substr(0, path_start);
        path_prefix_ = config_.base_url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
        path_prefix_.pop_back();
    }
}

ModelResponse HttpBackend::complete(const ModelRequest& request, const CallKey& /*key*/, Clock& clock) {
    nlohmann::json body = {
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
    };
    if (request.max_output_tokens) {
        body["max_tokens"] = *request.max_output_tokens;
    }

    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const double started = clock.now();
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(), "application/json");
    const double latency = clock.now() - started;

    if (!res) {
        throw TransportError("request to " + scheme_host_port_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw TransportError(fmt::format("HTTP {} from {}: {}", res->status, scheme_host_port_,
                                         res->body.substr(0, 200)));
    }

    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
        throw TransportError("chat completion response is not JSON");
    }
    const auto* content = [&]() -> const nlohmann::json* {
        if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty()) {
            return nullptr;
        }
        const auto& choice = reply["choices"][0];
        if (!choice.contains("message") || !choice["message"].contains("content") ||
            !choice["message"]["content"].is_string()) {
            return nullptr;
        }
        return &choice["message"]["content"];
    }();
    if (content == nullptr) {
        throw TransportError("chat completion response has no choices[0].message.content");
    }

    ModelResponse r;
    r.text = content->get<std::string>();
    r.prompt_tokens = count_tokens(request.prompt);
    r.completion_tokens = count_tokens(r.text);
    if (reply.contains("usage") && reply["usage"].is_object()) {
        const auto& usage = reply["usage"];
        if (usage.contains("prompt_tokens") && usage["prompt_tokens"].is_number_unsigned()) {
            r.prompt_tokens = usage["prompt_tokens"].get<std::uint64_t>();
        }
        if (usage.contains("completion_tokens") && usage["completion_tokens"].is_number_unsigned()) {
            r.completion_tokens = usage["completion_tokens"].get<std::uint64_t>();
        }
    }
    r.model_latency = latency < 0.0 ? 0.0 : latency;
    return r;
}

}  // namespace rstd
