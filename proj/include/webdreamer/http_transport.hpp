#pragma once

// OpenAI-style chat-completions transport over HTTP. Split out of llm.hpp so
// offline builds and tests never pull in the socket layer.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "webdreamer/llm.hpp"

namespace wd::llm {

// Endpoint and credentials come from WEBDREAMER_API_BASE / WEBDREAMER_API_KEY
// unless given explicitly. Providers without server-side `n` still satisfy
// the n_samples contract: the gateway checks the returned count.
inline Transport make_http_transport(std::string base_url = "", std::string api_key = "") {
    if (base_url.empty())
        if (const char* v = std::getenv("WEBDREAMER_API_BASE")) base_url = v;
    if (api_key.empty())
        if (const char* v = std::getenv("WEBDREAMER_API_KEY")) api_key = v;
    if (base_url.empty())
        throw TransportError("no endpoint configured (set WEBDREAMER_API_BASE)");

    return [base_url, api_key](const CompletionRequest& req) -> std::vector<std::string> {
        json messages = json::array();
        for (const auto& m : req.messages) {
            json content = json::array();
            content.push_back({{"type", "text"}, {"text", m.text}});
            for (const auto& ref : m.image_refs)
                content.push_back({{"type", "image_url"}, {"image_url", {{"url", ref}}}});
            messages.push_back({{"role", m.role}, {"content", content}});
        }
        json body = {{"model", req.model_name},
                     {"messages", messages},
                     {"temperature", req.temperature},
                     {"n", req.n_samples},
                     {"max_tokens", req.max_tokens}};

        httplib::Client client(base_url);
        client.set_read_timeout(120, 0);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res) throw TransportError("connection to " + base_url + " failed");
        if (res->status == 429 || res->status >= 500)
            throw TransportError("transient HTTP " + std::to_string(res->status));
        if (res->status != 200)
            throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body);

        json reply = json::parse(res->body);
        std::vector<std::string> out;
        for (const auto& choice : reply.at("choices"))
            out.push_back(choice.at("message").at("content").get<std::string>());
        return out;
    };
}

}  // namespace wd::llm
