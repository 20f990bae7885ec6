#pragma once

// Rule generator backed by an OpenAI-compatible chat-completion endpoint.
// Requires cpp-httplib; link the qdsched_remote target.

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qdsched/generator.hpp"

namespace qdsched {

struct RemoteConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "QDSCHED_API_KEY";
    double timeout_s = 60.0;
    int transport_retries = 3;
    double backoff_s = 1.0;  // doubled after every failed attempt
};

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // without trailing slash
};

inline ParsedUrl parse_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base URL needs a scheme: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme: " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") throw ConfigError("this build has no TLS support; use an http:// endpoint");
#endif
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    out.origin = url.substr(0, path_start);
    out.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    if (out.origin.size() <= scheme_end + 3) throw ConfigError("base URL has no host: " + url);
    return out;
}

class RemoteGenerator : public RuleGenerator {
public:
    explicit RemoteGenerator(RemoteConfig cfg) : cfg_(std::move(cfg)), url_(parse_base_url(cfg_.base_url)) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str())) key_ = key;
    }

    std::string name() const override { return "remote:" + cfg_.model; }
    bool deterministic() const override { return false; }

    std::string generate(const GeneratorRequest& req) override {
        const Prompt prompt = render_prompt(req);
        const nlohmann::json body = {
            {"model", cfg_.model},
            {"temperature", req.temperature},
            {"messages",
             {{{"role", "system"}, {"content", prompt.system}}, {{"role", "user"}, {"content", prompt.user}}}}};

        httplib::Client client(url_.origin);
        const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::duration<double>(cfg_.timeout_s));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers headers;
        if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);

        std::string last_error;
        double backoff = cfg_.backoff_s;
        for (int attempt = 0; attempt <= cfg_.transport_retries; ++attempt) {
            if (attempt > 0 && backoff > 0.0) {
                std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
                backoff *= 2.0;
            }
            auto res = client.Post(url_.path + "/chat/completions", headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) throw GeneratorError("endpoint rejected request: HTTP " + std::to_string(res->status));
            try {
                const auto doc = nlohmann::json::parse(res->body);
                return doc.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw GeneratorError(std::string("malformed completion response: ") + e.what());
            }
        }
        throw GeneratorError("endpoint unreachable after " + std::to_string(cfg_.transport_retries + 1) +
                             " attempts (" + last_error + ")");
    }

private:
    RemoteConfig cfg_;
    ParsedUrl url_;
    std::string key_;
};

}  // namespace qdsched
