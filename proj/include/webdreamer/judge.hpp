#pragma once

// Trajectory scoring: the LLM judge with the three-scale rubric
// (complete 1.0 / on track 0.5 / incorrect 0) and a goal-distance oracle.

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "webdreamer/core.hpp"
#include "webdreamer/env.hpp"
#include "webdreamer/llm.hpp"
#include "webdreamer/wm.hpp"

namespace wd::judge {

using core::Action;
using core::ActionKind;
using core::Observation;
using core::ScoredTrajectory;
using core::SimulatedTrajectory;
using core::TaskInstance;

struct MalformedJudgement : std::runtime_error {
    explicit MalformedJudgement(const std::string& what) : std::runtime_error(what) {}
};
struct AllSamplesMalformed : std::runtime_error {
    explicit AllSamplesMalformed(const std::string& what) : std::runtime_error(what) {}
};

// Reads the "Status:" and "On the right track to success:" lines
// (case-insensitive): success -> 1.0, failure+yes -> 0.5, failure+no -> 0.
inline double parse_judgement(const std::string& text) {
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    std::string lc = lower(text);
    auto value_after = [&](const std::string& label) -> std::optional<std::string> {
        std::size_t pos = lc.find(label);
        if (pos == std::string::npos) return std::nullopt;
        std::size_t eol = lc.find('\n', pos);
        return lc.substr(pos + label.size(),
                         (eol == std::string::npos ? lc.size() : eol) - pos - label.size());
    };
    auto status = value_after("status:");
    auto track = value_after("on the right track to success:");
    if (!status) throw MalformedJudgement("missing 'Status:' line");
    if (!track) throw MalformedJudgement("missing 'On the right track to success:' line");
    bool success = status->find("success") != std::string::npos;
    bool failure = status->find("failure") != std::string::npos;
    if (!success && !failure) throw MalformedJudgement("Status is neither success nor failure");
    if (success) return 1.0;
    bool yes = track->find("yes") != std::string::npos;
    bool no = track->find("no") != std::string::npos;
    if (!yes && !no) throw MalformedJudgement("track line is neither yes nor no");
    return yes ? 0.5 : 0.0;
}

// ---------------------------------------------------------------------------
// Interface

class Judge {
public:
    virtual ~Judge() = default;

    // Scores a simulated trajectory rooted at `root_obs`; n >= 1 samples.
    virtual ScoredTrajectory score_trajectory(const TaskInstance& task,
                                              const std::vector<Action>& history,
                                              const Observation& root_obs,
                                              const SimulatedTrajectory& traj, int n) = 0;

    // Scores a bare (state, action) pair: the rerank-without-simulation path.
    virtual double score_action(const TaskInstance& task, const std::vector<Action>& history,
                                const Observation& root_obs, const Action& action) = 0;

    // Value of a real observation relative to the episode's starting
    // observation; used by best-first tree search.
    virtual double score_state(const TaskInstance& task, const Observation& episode_root,
                               const Observation& obs) = 0;
};

// ---------------------------------------------------------------------------
// Oracle judge

// Deterministic judge backed by BFS goal distances. Simulated trajectories
// are evaluated on the state their *descriptions* claim, so a lying world
// model misleads this judge exactly as it would mislead an LLM judge.
class OracleJudge : public Judge {
public:
    explicit OracleJudge(const env::SiteGraph& graph) : graph_(graph) {}

    ScoredTrajectory score_trajectory(const TaskInstance& task,
                                      const std::vector<Action>& /*history*/,
                                      const Observation& root_obs,
                                      const SimulatedTrajectory& traj, int n) override {
        const env::GoalSpec& goal = graph_.goals.at(task.goal_id);
        env::EnvState root = state_for_observation(root_obs);
        env::EnvState end = root;

        std::optional<Action> final_stop;
        for (const auto& [change, imagined] : traj.steps) {
            if (change.producing_action.kind == ActionKind::Stop) {
                final_stop = change.producing_action;
                break;
            }
            if (const env::TransitionEffect* t = claimed_transition(change.description))
                end = env::apply_transition(end, *t, change.description);
            if (imagined && imagined->kind == ActionKind::Stop) {
                final_stop = *imagined;
                break;
            }
        }

        double score = 0.0;
        if (final_stop) {
            score = env::goal_satisfied(graph_, goal, end, final_stop->answer) ? 1.0 : 0.0;
        } else {
            int before = env::oracle_distance(graph_, root, goal);
            int after = env::oracle_distance(graph_, end, goal);
            if (env::state_satisfies_goal(graph_, end, goal))
                score = 1.0;
            else
                score = after < before ? 0.5 : 0.0;
        }
        ScoredTrajectory scored;
        scored.trajectory = traj;
        scored.samples.assign(static_cast<std::size_t>(std::max(1, n)), score);
        scored.aggregate = score;
        scored.validate();
        return scored;
    }

    // Myopic surface heuristic: no lookahead, just lexical overlap between
    // the action's target and the instruction. This is deliberately fallible
    // in the way one-step judgement is.
    double score_action(const TaskInstance& task, const std::vector<Action>& /*history*/,
                        const Observation& root_obs, const Action& action) override {
        const env::GoalSpec& goal = graph_.goals.at(task.goal_id);
        if (action.kind == ActionKind::Stop) {
            env::EnvState state = state_for_observation(root_obs);
            return env::goal_satisfied(graph_, goal, state, action.answer) ? 1.0 : 0.0;
        }
        std::string target_text;
        if (action.elem) {
            for (const auto& e : root_obs.elements)
                if (e.id && *e.id == *action.elem) target_text = e.text_content;
        } else if (action.url) {
            target_text = *action.url;
        } else if (action.text) {
            target_text = *action.text;
        }
        return tokens_overlap(task.instruction, target_text) ? 0.5 : 0.0;
    }

    double score_state(const TaskInstance& task, const Observation& episode_root,
                       const Observation& obs) override {
        const env::GoalSpec& goal = graph_.goals.at(task.goal_id);
        env::EnvState root = state_for_observation(episode_root);
        env::EnvState cur = state_for_observation(obs);
        if (env::state_satisfies_goal(graph_, cur, goal)) return 1.0;
        return env::oracle_distance(graph_, cur, goal) < env::oracle_distance(graph_, root, goal)
                   ? 0.5
                   : 0.0;
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

    const env::TransitionEffect* claimed_transition(const std::string& description) const {
        if (const auto* t = env::find_transition_by_description(graph_, description)) return t;
        // full_html / accessibility_tree mode: match the rendered page
        if (description.rfind("HTML:", 0) == 0 || description.rfind("AXTREE:", 0) == 0) {
            for (const auto& t : graph_.transitions) {
                env::EnvState probe;
                probe.page = t.target_page;
                probe.bindings = graph_.variables;
                std::string rendered =
                    description.rfind("HTML:", 0) == 0
                        ? "HTML:\n" + wm::render_page_html(graph_, probe)
                        : "AXTREE:\n" + wm::render_page_ax_tree(graph_, probe);
                if (rendered == description) return &t;
            }
        }
        return nullptr;
    }

    static bool tokens_overlap(const std::string& instruction, const std::string& text) {
        static const std::set<std::string> stopwords = {
            "the", "a",    "an",   "to",   "of",   "and",  "or",   "in",   "on",
            "for", "with", "your", "you",  "it",   "is",   "what", "find", "buy",
            "go",  "open", "show", "me",   "page", "site", "store"};
        auto tokens = [&](const std::string& s) {
            std::set<std::string> out;
            std::string cur;
            for (char c : s + " ") {
                if (std::isalnum(static_cast<unsigned char>(c))) {
                    cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
                } else if (!cur.empty()) {
                    if (!stopwords.count(cur)) {
                        out.insert(cur);
                        // crude plural stemming so "dresses" meets "dress"
                        if (cur.size() > 3 && cur.compare(cur.size() - 2, 2, "es") == 0)
                            out.insert(cur.substr(0, cur.size() - 2));
                        if (cur.size() > 2 && cur.back() == 's')
                            out.insert(cur.substr(0, cur.size() - 1));
                    }
                    cur.clear();
                }
            }
            return out;
        };
        std::set<std::string> a = tokens(instruction);
        for (const std::string& t : tokens(text))
            if (a.count(t)) return true;
        return false;
    }

    const env::SiteGraph& graph_;
};

// ---------------------------------------------------------------------------
// LLM judge

class LlmJudge : public Judge {
public:
    LlmJudge(llm::Gateway& gateway, const std::string& prompts_dir, double temperature = 0.0)
        : gateway_(gateway),
          template_(llm::load_template(prompts_dir, llm::TemplateName::RewardModel)),
          temperature_(temperature) {}

    ScoredTrajectory score_trajectory(const TaskInstance& task,
                                      const std::vector<Action>& history,
                                      const Observation& root_obs,
                                      const SimulatedTrajectory& traj, int n) override {
        std::ostringstream changes;
        for (std::size_t i = 0; i < traj.steps.size(); ++i) {
            if (i) changes << "\n";
            changes << i + 1 << ". "
                    << core::action_signature(traj.steps[i].first.producing_action) << " -> "
                    << traj.steps[i].first.description;
            if (traj.steps[i].second)
                changes << "\n   then: " << core::action_signature(*traj.steps[i].second);
        }
        return sample_scores(task, history, root_obs, changes.str(), n);
    }

    double score_action(const TaskInstance& task, const std::vector<Action>& history,
                        const Observation& root_obs, const Action& action) override {
        std::string changes = "(no simulation) Candidate action under evaluation: " +
                              core::action_signature(action);
        return sample_scores(task, history, root_obs, changes, 1).aggregate;
    }

    double score_state(const TaskInstance& task, const Observation& /*episode_root*/,
                       const Observation& obs) override {
        std::vector<Action> history;
        return sample_scores(task, history, obs, "(real observation, no simulated changes)", 1)
            .aggregate;
    }

private:
    ScoredTrajectory sample_scores(const TaskInstance& task, const std::vector<Action>& history,
                                   const Observation& root_obs, const std::string& changes,
                                   int n) {
        if (n < 1) throw std::invalid_argument("judge needs n >= 1 samples");
        std::vector<double> samples;
        std::string malformed;
        for (int i = 0; i < n; ++i) {
            std::string prompt = llm::render_template(
                template_, {{"user_intent", task.instruction},
                            {"action_history", history_text(history, i)},
                            {"current_state", core::render_observation(root_obs)},
                            {"predicted_changes", changes}});
            llm::CompletionRequest req;
            llm::Message m;
            m.role = "user";
            m.text = prompt;
            if (root_obs.image_ref) m.image_refs.push_back(*root_obs.image_ref);
            req.messages.push_back(std::move(m));
            req.temperature = temperature_;
            try {
                samples.push_back(parse_judgement(gateway_.complete(req).at(0)));
            } catch (const MalformedJudgement& e) {
                malformed = e.what();  // excluded from the mean
            }
        }
        if (samples.empty())
            throw AllSamplesMalformed("all " + std::to_string(n) +
                                      " judge samples malformed: " + malformed);
        double sum = 0;
        for (double s : samples) sum += s;
        ScoredTrajectory scored;
        scored.samples = samples;
        scored.aggregate = sum / static_cast<double>(samples.size());
        return scored;
    }

    // Sample diversity at temperature 0 comes from rotating the history
    // listing per sample, which also keys distinct transcript entries.
    static std::string history_text(const std::vector<Action>& history, int rotation) {
        if (history.empty()) return "(empty)";
        std::ostringstream os;
        std::size_t n = history.size();
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t idx = (i + static_cast<std::size_t>(rotation)) % n;
            if (i) os << "\n";
            os << idx + 1 << ". " << core::action_signature(history[idx]);
        }
        return os.str();
    }

    llm::Gateway& gateway_;
    llm::PromptTemplate template_;
    double temperature_;
};

}  // namespace wd::judge
