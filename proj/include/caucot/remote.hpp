#pragma once

#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "caucot/backend.hpp"
#include "caucot/errors.hpp"

namespace caucot {

struct RemoteConfig {
    std::string endpoint;  // scheme://host[:port][/prefix]
    std::string model;
    std::string score_model;  // empty: use model for score requests too
    std::string api_key_env = "CAUCOT_API_KEY";
    int max_attempts = 3;  // total tries per sample, transient failures only
    int backoff_base_ms = 250;
    int max_in_flight = 8;
    int timeout_s = 120;
};

// Chat-completion client. One POST per sample; transient failures (429, 5xx,
// transport) retry with exponential backoff, auth failures do not.
class RemoteBackend : public ScoringBackend {
public:
    explicit RemoteBackend(RemoteConfig config)
        : cfg_(std::move(config)),
          slots_(cfg_.max_in_flight > 0 ? cfg_.max_in_flight : 1) {
        if (cfg_.endpoint.empty()) throw ConfigInvalid("remote backend requires an endpoint");
        if (cfg_.model.empty()) throw ConfigInvalid("remote backend requires a model name");
        if (!cfg_.api_key_env.empty()) {
            const char* key = std::getenv(cfg_.api_key_env.c_str());
            if (!key || !*key) {
                throw AuthError("credential env var " + cfg_.api_key_env + " is not set");
            }
            api_key_ = key;
        }
        split_endpoint();
    }

    std::string kind() const override { return "remote"; }

    const RemoteConfig& config() const { return cfg_; }
    const std::string& endpoint_host() const { return base_; }

    BackendResponse complete(const BackendRequest& request) override {
        request.validate();
        BackendResponse resp;
        resp.completions.reserve(static_cast<std::size_t>(request.samples));
        for (int k = 0; k < request.samples; ++k) {
            slots_.acquire();
            try {
                resp.completions.push_back(one_completion(request));
            } catch (...) {
                slots_.release();
                throw;
            }
            slots_.release();
        }
        return resp;
    }

private:
    void split_endpoint() {
        const auto scheme_end = cfg_.endpoint.find("://");
        const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const auto slash = cfg_.endpoint.find('/', host_start);
        if (slash == std::string::npos) {
            base_ = cfg_.endpoint;
        } else {
            base_ = cfg_.endpoint.substr(0, slash);
            prefix_ = cfg_.endpoint.substr(slash);
            while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        }
    }

    nlohmann::json request_body(const BackendRequest& request) const {
        nlohmann::json body;
        body["model"] = (request.mode == RequestMode::score && !cfg_.score_model.empty())
                            ? cfg_.score_model
                            : cfg_.model;
        nlohmann::json messages = nlohmann::json::array();
        if (!request.system.empty()) {
            messages.push_back({{"role", "system"}, {"content", request.system}});
        }
        messages.push_back({{"role", "user"}, {"content", request.prompt}});
        body["messages"] = std::move(messages);
        body["temperature"] = request.temperature;
        body["top_p"] = request.top_p;
        body["seed"] = request.seed;
        return body;
    }

    std::string one_completion(const BackendRequest& request) {
        const nlohmann::json body = request_body(request);
        std::string last_failure = "no attempt made";
        bool rate_limited = false;

        for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(cfg_.backoff_base_ms << (attempt - 1)));
            }
            httplib::Client client(base_);
            client.set_connection_timeout(cfg_.timeout_s, 0);
            client.set_read_timeout(cfg_.timeout_s, 0);
            httplib::Headers headers;
            if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

            auto res = client.Post(prefix_ + "/v1/chat/completions", headers, body.dump(),
                                   "application/json");
            if (!res) {
                last_failure = "transport failure: " + httplib::to_string(res.error());
                rate_limited = false;
                continue;
            }
            if (res->status == 200) return extract_content(res->body);
            if (res->status == 401 || res->status == 403) {
                throw AuthError("endpoint rejected credentials (HTTP " +
                                std::to_string(res->status) + ")");
            }
            if (res->status == 429) {
                last_failure = "HTTP 429";
                rate_limited = true;
                continue;
            }
            if (res->status >= 500) {
                last_failure = "HTTP " + std::to_string(res->status);
                rate_limited = false;
                continue;
            }
            throw MalformedResponse("unexpected HTTP " + std::to_string(res->status) + ": " +
                                    res->body.substr(0, 200));
        }
        if (rate_limited) {
            throw RateLimited("rate limited after " + std::to_string(cfg_.max_attempts) +
                              " attempts");
        }
        throw TransportError("gave up after " + std::to_string(cfg_.max_attempts) +
                             " attempts; last: " + last_failure);
    }

    static std::string extract_content(const std::string& body) {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw MalformedResponse("response is not valid JSON");
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw MalformedResponse("response lacks choices[0].message.content");
        }
    }

    RemoteConfig cfg_;
    std::string api_key_;
    std::string base_;    // scheme://host:port
    std::string prefix_;  // optional path prefix
    std::counting_semaphore<1 << 16> slots_;
};

}  // namespace caucot
