#pragma once

#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "rulexplain/prompts.hpp"
#include "rulexplain/synthesizer.hpp"

#include <httplib.h>
#include <json.hpp>

namespace rulexplain {

struct HttpOptions {
    std::string base_url = "http://127.0.0.1:8080";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4.1";
    double temperature = 0.2;
    int retries = 3;  // after the first attempt; backoff doubles from 1 s
    std::chrono::seconds timeout{120};
    std::string api_key_env = "RULEXPLAIN_API_KEY";
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Minimal OpenAI-compatible chat-completions client with retry on
/// transport errors, 429 and 5xx.
class ChatClient {
public:
    explicit ChatClient(HttpOptions opt, Sleeper sleeper = {})
        : opt_(std::move(opt)), sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) {
              std::this_thread::sleep_for(d);
          })) {}

    const HttpOptions& options() const { return opt_; }

    std::string complete(const std::string& prompt) const {
        nlohmann::json body = {{"model", opt_.model},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                               {"temperature", opt_.temperature}};
        httplib::Headers headers;
        if (const char* key = std::getenv(opt_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

        std::string last;
        for (int attempt = 0; attempt <= opt_.retries; ++attempt) {
            if (attempt > 0) sleeper_(std::chrono::milliseconds(1000LL << (attempt - 1)));
            httplib::Client cli(opt_.base_url);
            cli.set_connection_timeout(opt_.timeout);
            cli.set_read_timeout(opt_.timeout);
            cli.set_write_timeout(opt_.timeout);
            auto res = cli.Post(opt_.path, headers, body.dump(), "application/json");
            if (!res) {
                last = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) throw BackendError("HTTP " + std::to_string(res->status), res->body);
            try {
                const auto j = nlohmann::json::parse(res->body);
                return j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw BackendError(std::string("unexpected chat reply: ") + e.what(), res->body);
            }
        }
        throw BackendError("chat endpoint failed after " + std::to_string(opt_.retries + 1) + " attempts (" + last + ")",
                           "");
    }

private:
    HttpOptions opt_;
    Sleeper sleeper_;
};

/// Synthesizer backed by a chat endpoint. Replies that cannot be parsed or
/// validated are re-requested; the last raw reply travels with the error.
class HttpSynthesizer : public RuleSynthesizer {
public:
    explicit HttpSynthesizer(HttpOptions opt, PromptLibrary prompts = {}, Sleeper sleeper = {})
        : client_(std::move(opt), std::move(sleeper)), prompts_(std::move(prompts)) {}

    std::string name() const override { return "http"; }
    bool deterministic() const override { return false; }

    /// Prompts sent so far, in order.
    const std::vector<std::string>& transcript() const { return transcript_; }

    Ruleset infer_initial_ruleset(const SynthesisContext& ctx) override {
        if (ctx.cluster.medoids.empty()) throw PreconditionError("initial ruleset needs at least one context medoid");
        return request_rules(prompts_.render(PromptKind::Initial, ctx), ctx);
    }

    Generation generate_input(const SynthesisContext& ctx, const Ruleset& rules) override {
        PromptExtras extra;
        extra.rules = &rules;
        return request_input(prompts_.render(PromptKind::Generate, ctx, extra), ctx);
    }

    Ruleset refine_ruleset(const SynthesisContext& ctx, const Ruleset& rules, const InputSeries& trial_input,
                           const OutputSeries& trial_output, const MismatchReport& mismatch) override {
        PromptExtras extra;
        extra.rules = &rules;
        extra.trial_input = &trial_input;
        extra.trial_output = &trial_output;
        extra.mismatch = &mismatch;
        return request_rules(prompts_.render(PromptKind::Refine, ctx, extra), ctx);
    }

    Generation generate_unguided(const SynthesisContext& ctx) override {
        return request_input(prompts_.render(PromptKind::NoGuidance, ctx.without_medoids()), ctx);
    }

private:
    Ruleset request_rules(const std::string& prompt, const SynthesisContext& ctx) {
        std::string reply, why;
        for (int attempt = 0; attempt <= client_.options().retries; ++attempt) {
            transcript_.push_back(prompt);
            reply = client_.complete(prompt);
            try {
                auto rs = parse_rules_reply(reply, ctx.spec, ctx.interval());
                const auto violations = validate_ruleset(rs, ctx.spec, PhasePolicy::Periodic);
                if (violations.empty()) return rs;
                why = "reply ruleset violates " + violations.front().message;
            } catch (const Error& e) {
                why = e.what();
            }
        }
        throw BackendError("unusable rules reply: " + why, reply);
    }

    Generation request_input(const std::string& prompt, const SynthesisContext& ctx) {
        std::string reply, why;
        for (int attempt = 0; attempt <= client_.options().retries; ++attempt) {
            transcript_.push_back(prompt);
            reply = client_.complete(prompt);
            try {
                auto parsed = parse_generation_reply(reply, ctx.spec);
                Generation g;
                g.input = InputSeries(ctx.spec, std::move(parsed.values));
                g.justifications = std::move(parsed.justifications);
                g.warnings = std::move(parsed.warnings);
                for (const auto& m : ctx.examples())
                    if (m.input.values() == g.input.values())
                        g.warnings.push_back("generated input coincides with a context example");
                return g;
            } catch (const Error& e) {
                why = e.what();
            }
        }
        throw BackendError("unusable input reply: " + why, reply);
    }

    ChatClient client_;
    PromptLibrary prompts_;
    std::vector<std::string> transcript_;
};

}  // namespace rulexplain
