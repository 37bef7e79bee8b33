#pragma once

// Candidate action generation: top-k frequency sampling over proposal
// completions plus the fail-open self-refinement filter.

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "webdreamer/core.hpp"
#include "webdreamer/env.hpp"
#include "webdreamer/llm.hpp"

namespace wd::propose {

using core::Action;
using core::ActionKind;
using core::Observation;
using core::TaskInstance;

struct NoValidCandidates : std::runtime_error {
    explicit NoValidCandidates(const std::string& what) : std::runtime_error(what) {}
};

// Parses each completion, groups by signature, orders groups by descending
// frequency (ties: first occurrence), returns the top k distinct actions.
// Unparseable samples are dropped.
inline std::vector<Action> rank_candidates(const std::vector<std::string>& completions, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    struct Group {
        Action action;
        int count = 0;
        std::size_t first_seen = 0;
    };
    std::vector<Group> groups;
    std::map<std::string, std::size_t> index_by_sig;
    std::size_t parsed = 0;
    for (const std::string& text : completions) {
        Action a;
        try {
            a = core::parse_action(text);
        } catch (const std::exception&) {
            continue;
        }
        ++parsed;
        std::string sig = core::action_signature(a);
        auto it = index_by_sig.find(sig);
        if (it == index_by_sig.end()) {
            index_by_sig[sig] = groups.size();
            groups.push_back({a, 1, groups.size()});
        } else {
            ++groups[it->second].count;
        }
    }
    if (parsed == 0) throw NoValidCandidates("no proposal sample parsed into a valid action");
    std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.first_seen < b.first_seen;
    });
    std::vector<Action> out;
    for (const Group& g : groups) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back(g.action);
    }
    return out;
}

// Parses the "Selected actions:" line of a refinement reply into indices.
// Accepts "0", "id0", and the prompt's stray "aid0" spelling. Returns
// nullopt when the line is missing or yields nothing usable.
inline std::optional<std::vector<std::size_t>> parse_selected_indices(const std::string& reply,
                                                                      std::size_t n_candidates) {
    std::string lc = reply;
    std::transform(lc.begin(), lc.end(), lc.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::size_t pos = lc.rfind("selected actions:");
    if (pos == std::string::npos) return std::nullopt;
    std::size_t eol = reply.find('\n', pos);
    std::string line = reply.substr(pos + 17, (eol == std::string::npos ? reply.size() : eol) -
                                                  pos - 17);
    std::vector<std::size_t> out;
    std::string tok;
    std::istringstream is(line);
    while (std::getline(is, tok, ';')) {
        std::string digits;
        for (char c : tok)
            if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
        if (digits.empty()) continue;
        std::size_t idx = std::stoul(digits);
        if (idx >= n_candidates) {
            std::cerr << "[propose] ignoring out-of-range refinement index " << idx << "\n";
            continue;
        }
        if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
    }
    if (out.empty()) return std::nullopt;
    std::sort(out.begin(), out.end());  // preserve original candidate order
    return out;
}

// ---------------------------------------------------------------------------
// Interface

class Proposer {
public:
    virtual ~Proposer() = default;
    virtual std::vector<Action> get_candidates(const TaskInstance& task, const Observation& obs,
                                               const std::vector<Action>& history, int k) = 0;
    virtual std::vector<Action> self_refine(const TaskInstance& task, const Observation& obs,
                                            const std::vector<Action>& history,
                                            const std::vector<Action>& candidates) = 0;
    // Reactive path: one proposal, no ranking.
    virtual Action propose_one(const TaskInstance& task, const Observation& obs,
                               const std::vector<Action>& history) {
        return get_candidates(task, obs, history, 1).front();
    }
};

// ---------------------------------------------------------------------------
// Graph-backed proposer (oracle experiments)

// Enumerates the actions actually wired on the current page, in the site
// graph's declaration order, plus a stop once the goal is satisfiable here.
// Declaration order is the fixture author's lever: trap sites list the
// tempting wrong link first.
class GraphProposer : public Proposer {
public:
    explicit GraphProposer(const env::SiteGraph& graph) : graph_(graph) {}

    std::vector<Action> get_candidates(const TaskInstance& task, const Observation& obs,
                                       const std::vector<Action>& /*history*/, int k) override {
        if (k < 1) throw std::invalid_argument("k must be >= 1");
        const env::GoalSpec& goal = graph_.goals.at(task.goal_id);
        env::EnvState state = state_for_observation(obs);

        std::vector<Action> out;
        if (env::state_satisfies_goal(graph_, state, goal))
            out.push_back(Action::stop(env::extract_answer(graph_, state, goal)));
        for (const env::TransitionEffect* t : env::transitions_from(graph_, state.page)) {
            if (t->action_pattern.find('*') != std::string::npos) continue;
            out.push_back(core::parse_action_text(t->action_pattern));
        }
        if (out.empty()) throw NoValidCandidates("page '" + state.page + "' offers no actions");
        if (static_cast<int>(out.size()) > k) out.resize(static_cast<std::size_t>(k));
        return out;
    }

    std::vector<Action> self_refine(const TaskInstance&, const Observation&,
                                    const std::vector<Action>&,
                                    const std::vector<Action>& candidates) override {
        return candidates;  // every enumerated action is real; nothing to prune
    }

private:
    env::EnvState state_for_observation(const Observation& obs) const {
        for (const auto& p : graph_.pages) {
            if (p.url == obs.url) {
                env::EnvState s;
                s.page = p.id;
                s.bindings = graph_.variables;
                return s;
            }
        }
        throw std::runtime_error("no site page matches observation URL '" + obs.url + "'");
    }

    const env::SiteGraph& graph_;
};

// ---------------------------------------------------------------------------
// LLM proposer

class LlmProposer : public Proposer {
public:
    LlmProposer(llm::Gateway& gateway, const std::string& prompts_dir, int m_samples = 10,
                double temperature = 1.0)
        : gateway_(gateway),
          proposal_(llm::load_template(prompts_dir, llm::TemplateName::ActionProposal)),
          refinement_(llm::load_template(prompts_dir, llm::TemplateName::SelfRefinement)),
          m_samples_(m_samples),
          temperature_(temperature) {}

    std::vector<Action> get_candidates(const TaskInstance& task, const Observation& obs,
                                       const std::vector<Action>& history, int k) override {
        llm::CompletionRequest req = proposal_request(task, obs, history);
        req.n_samples = std::max(m_samples_, k);
        return rank_candidates(gateway_.complete(req), k);
    }

    Action propose_one(const TaskInstance& task, const Observation& obs,
                       const std::vector<Action>& history) override {
        llm::CompletionRequest req = proposal_request(task, obs, history);
        return core::parse_action(gateway_.complete(req).at(0));
    }

    std::vector<Action> self_refine(const TaskInstance& task, const Observation& obs,
                                    const std::vector<Action>& history,
                                    const std::vector<Action>& candidates) override {
        if (candidates.empty()) throw std::invalid_argument("self_refine needs >= 1 candidate");
        std::ostringstream listing;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (i) listing << "\n";
            listing << i << ". " << core::action_signature(candidates[i]);
        }
        std::string prompt = llm::render_template(
            refinement_, {{"last_actions_str", history_text(history)},
                          {"current_url", obs.url},
                          {"len(intent_images)", std::to_string(task.instruction_image_refs.size())},
                          {"len(screenshots)", obs.image_ref ? "1" : "0"},
                          {"user_intent", task.instruction},
                          {"action_descriptions", listing.str()}});
        llm::CompletionRequest req;
        llm::Message m;
        m.role = "user";
        m.text = prompt;
        m.image_refs = task.instruction_image_refs;
        if (obs.image_ref) m.image_refs.push_back(*obs.image_ref);
        req.messages.push_back(std::move(m));
        req.temperature = 0.0;

        // fail-open: any trouble filtering means no filtering
        try {
            auto indices = parse_selected_indices(gateway_.complete(req).at(0), candidates.size());
            if (!indices) {
                std::cerr << "[propose] refinement reply unusable; keeping all candidates\n";
                return candidates;
            }
            std::vector<Action> out;
            for (std::size_t idx : *indices) out.push_back(candidates[idx]);
            return out;
        } catch (const llm::CacheMiss&) {
            throw;
        } catch (const std::exception& e) {
            std::cerr << "[propose] refinement failed (" << e.what()
                      << "); keeping all candidates\n";
            return candidates;
        }
    }

private:
    llm::CompletionRequest proposal_request(const TaskInstance& task, const Observation& obs,
                                            const std::vector<Action>& history) {
        std::string prompt = llm::render_template(
            proposal_,
            {{"Web Information", core::render_observation(obs)},
             {"Task Objective", task.instruction},
             {"Web Page Screenshot Image", obs.image_ref.value_or("(no screenshot)")},
             {"Web URL", obs.url},
             {"Previous Tabs", tabs_text(obs)},
             {"Previous Action",
              history.empty() ? "None" : core::action_signature(history.back())}});
        llm::CompletionRequest req;
        llm::Message m;
        m.role = "user";
        m.text = prompt;
        m.image_refs = task.instruction_image_refs;
        if (obs.image_ref) m.image_refs.push_back(*obs.image_ref);
        req.messages.push_back(std::move(m));
        req.temperature = temperature_;
        return req;
    }

    static std::string history_text(const std::vector<Action>& history) {
        if (history.empty()) return "(empty)";
        std::ostringstream os;
        for (std::size_t i = 0; i < history.size(); ++i) {
            if (i) os << "; ";
            os << core::action_signature(history[i]);
        }
        return os.str();
    }

    static std::string tabs_text(const Observation& obs) {
        std::ostringstream os;
        for (std::size_t i = 0; i < obs.open_tabs.size(); ++i) {
            if (i) os << " | ";
            os << "Tab " << obs.open_tabs[i].first << ": " << obs.open_tabs[i].second;
        }
        return os.str();
    }

    llm::Gateway& gateway_;
    llm::PromptTemplate proposal_;
    llm::PromptTemplate refinement_;
    int m_samples_;
    double temperature_;
};

}  // namespace wd::propose
