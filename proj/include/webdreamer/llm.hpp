#pragma once

// Chat-completion gateway: prompt templates, retrying transport, an
// append-only transcript cache, and live | record | replay modes.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "webdreamer/core.hpp"

namespace wd::llm {

using json = nlohmann::json;

struct MissingSlot : std::runtime_error {
    explicit MissingSlot(const std::string& name)
        : std::runtime_error("missing template slot: " + name), slot(name) {}
    std::string slot;
};
struct TransportError : std::runtime_error {
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};
struct CacheMiss : std::runtime_error {
    explicit CacheMiss(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Prompt templates

enum class TemplateName { ActionProposal, SelfRefinement, WorldModel, RewardModel };

inline const char* template_file(TemplateName t) {
    switch (t) {
        case TemplateName::ActionProposal: return "action_proposal.txt";
        case TemplateName::SelfRefinement: return "self_refinement.txt";
        case TemplateName::WorldModel: return "world_model.txt";
        case TemplateName::RewardModel: return "reward_model.txt";
    }
    return "";
}

struct PromptTemplate {
    TemplateName name = TemplateName::ActionProposal;
    std::string body;
    std::set<std::string> required_slots;

    void validate() const {
        for (const auto& slot : required_slots)
            if (body.find("{" + slot + "}") == std::string::npos)
                throw std::invalid_argument("template body lacks declared slot '" + slot + "'");
    }
};

inline std::set<std::string> default_required_slots(TemplateName t) {
    switch (t) {
        case TemplateName::ActionProposal:
            return {"Web Information", "Task Objective", "Web Page Screenshot Image",
                    "Web URL", "Previous Tabs", "Previous Action"};
        case TemplateName::SelfRefinement:
            return {"last_actions_str", "current_url", "len(intent_images)",
                    "len(screenshots)", "user_intent", "action_descriptions"};
        case TemplateName::WorldModel:
            return {"initial_observation", "prior_state_changes", "action"};
        case TemplateName::RewardModel:
            return {"user_intent", "action_history", "current_state", "predicted_changes"};
    }
    return {};
}

inline PromptTemplate load_template(const std::string& prompts_dir, TemplateName name) {
    std::ifstream in(prompts_dir + "/" + template_file(name));
    if (!in) throw std::runtime_error("cannot open prompt template: " + prompts_dir + "/" +
                                      template_file(name));
    std::ostringstream body;
    body << in.rdbuf();
    PromptTemplate t{name, body.str(), default_required_slots(name)};
    t.validate();
    return t;
}

// Substitutes every declared slot; unknown braces in the body are left alone.
inline std::string render_template(const PromptTemplate& t,
                                   const std::map<std::string, std::string>& bindings) {
    for (const auto& slot : t.required_slots)
        if (!bindings.count(slot)) throw MissingSlot(slot);
    std::string out = t.body;
    for (const auto& [name, value] : bindings) {
        std::string needle = "{" + name + "}";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Requests and the transcript cache

struct Message {
    std::string role;  // system | user | assistant
    std::string text;
    std::vector<std::string> image_refs;  // opaque
};

struct CompletionRequest {
    std::vector<Message> messages;
    double temperature = 1.0;
    int n_samples = 1;
    int max_tokens = 1024;
    std::string model_name = "gpt-4o";

    json to_json() const {
        json msgs = json::array();
        for (const auto& m : messages)
            msgs.push_back({{"role", m.role}, {"text", m.text}, {"image_refs", m.image_refs}});
        return {{"messages", msgs},
                {"temperature", temperature},
                {"n_samples", n_samples},
                {"max_tokens", max_tokens},
                {"model_name", model_name}};
    }
};

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Content hash of the full request; the transcript cache key.
inline std::string request_key(const CompletionRequest& req) {
    std::ostringstream os;
    os << std::hex << fnv1a(req.to_json().dump());
    return os.str();
}

// Line-delimited JSON records: {"key":..., "request":..., "responses":[...]}
class TranscriptCache {
public:
    TranscriptCache() = default;

    void load(const std::string& path) {
        path_ = path;
        std::ifstream in(path);
        std::string line;
        std::lock_guard lock(mu_);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            entries_[rec.at("key").get<std::string>()] =
                rec.at("responses").get<std::vector<std::string>>();
        }
    }

    void attach(const std::string& path) { path_ = path; }

    std::optional<std::vector<std::string>> lookup(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void append(const std::string& key, const CompletionRequest& req,
                const std::vector<std::string>& responses) {
        std::lock_guard lock(mu_);
        entries_[key] = responses;
        if (!path_.empty()) {
            std::ofstream out(path_, std::ios::app);
            out << json{{"key", key}, {"request", req.to_json()}, {"responses", responses}}.dump()
                << "\n";
        }
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<std::string>> entries_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Gateway

enum class GatewayMode { Live, Record, Replay };

inline GatewayMode gateway_mode_from_string(const std::string& s) {
    if (s == "live") return GatewayMode::Live;
    if (s == "record") return GatewayMode::Record;
    if (s == "replay") return GatewayMode::Replay;
    throw std::invalid_argument("gateway mode must be live|record|replay, got '" + s + "'");
}

// Returns one completion text per requested sample, or throws TransportError.
using Transport = std::function<std::vector<std::string>(const CompletionRequest&)>;

struct GatewayConfig {
    GatewayMode mode = GatewayMode::Replay;
    std::string transcript_path;
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{100};
    int max_in_flight = 8;
};

class Gateway {
public:
    Gateway(GatewayConfig cfg, Transport transport = nullptr)
        : cfg_(std::move(cfg)), transport_(std::move(transport)) {
        if (!cfg_.transcript_path.empty()) {
            if (cfg_.mode == GatewayMode::Replay)
                cache_.load(cfg_.transcript_path);
            else
                cache_.attach(cfg_.transcript_path);
        }
        if (cfg_.mode != GatewayMode::Replay && !transport_)
            throw std::invalid_argument("live/record gateway needs a transport");
    }

    std::vector<std::string> complete(const CompletionRequest& req) {
        if (req.n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
        std::string key = request_key(req);
        if (cfg_.mode == GatewayMode::Replay) {
            auto hit = cache_.lookup(key);
            if (!hit) throw CacheMiss("no transcript entry for request " + key);
            return *hit;
        }
        // record mode reuses earlier answers for byte-identical requests
        if (cfg_.mode == GatewayMode::Record) {
            auto hit = cache_.lookup(key);
            if (hit) return *hit;
        }
        std::vector<std::string> responses = call_with_retries(req);
        if (cfg_.mode == GatewayMode::Record) cache_.append(key, req, responses);
        return responses;
    }

    const TranscriptCache& cache() const { return cache_; }

private:
    std::vector<std::string> call_with_retries(const CompletionRequest& req) {
        InFlightGuard guard(*this);
        auto backoff = cfg_.initial_backoff;
        for (int attempt = 0;; ++attempt) {
            try {
                std::vector<std::string> out = transport_(req);
                if (static_cast<int>(out.size()) != req.n_samples)
                    throw TransportError("transport returned " + std::to_string(out.size()) +
                                         " samples, wanted " + std::to_string(req.n_samples));
                return out;
            } catch (const TransportError&) {
                if (attempt >= cfg_.max_retries) throw;
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
    }

    struct InFlightGuard {
        explicit InFlightGuard(Gateway& g) : gw(g) {
            std::unique_lock lock(gw.flight_mu_);
            gw.flight_cv_.wait(lock, [&] { return gw.in_flight_ < gw.cfg_.max_in_flight; });
            ++gw.in_flight_;
        }
        ~InFlightGuard() {
            {
                std::lock_guard lock(gw.flight_mu_);
                --gw.in_flight_;
            }
            gw.flight_cv_.notify_one();
        }
        Gateway& gw;
    };

    GatewayConfig cfg_;
    Transport transport_;
    TranscriptCache cache_;
    std::mutex flight_mu_;
    std::condition_variable flight_cv_;
    int in_flight_ = 0;
};

}  // namespace wd::llm
