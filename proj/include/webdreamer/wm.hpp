#pragma once

// World models implementing sim(o, a): an LLM-backed simulator that predicts
// state changes in natural language, and a deterministic oracle simulator
// with a fidelity knob that injects plausible-but-wrong predictions.

#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "webdreamer/core.hpp"
#include "webdreamer/env.hpp"
#include "webdreamer/llm.hpp"

namespace wd::wm {

using core::Action;
using core::ActionKind;
using core::Observation;
using core::SimulatedTrajectory;
using core::StateChange;
using core::TaskInstance;

struct SimulationError : std::runtime_error {
    explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};
struct MalformedPrediction : std::runtime_error {
    explicit MalformedPrediction(const std::string& what) : std::runtime_error(what) {}
};
struct UnknownTransition : std::runtime_error {
    explicit UnknownTransition(const std::string& what) : std::runtime_error(what) {}
};

enum class StateRepr { ChangeDescription, FullHtml, AccessibilityTree };

inline StateRepr state_repr_from_string(const std::string& s) {
    if (s == "change_description") return StateRepr::ChangeDescription;
    if (s == "full_html") return StateRepr::FullHtml;
    if (s == "accessibility_tree") return StateRepr::AccessibilityTree;
    throw std::invalid_argument("unknown state representation '" + s + "'");
}

struct SimConfig {
    int horizon = 1;
    StateRepr state_representation = StateRepr::ChangeDescription;
    double fidelity = 1.0;   // oracle only
    std::uint64_t seed = 0;  // oracle only

    void validate() const {
        if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
        if (fidelity < 0.0 || fidelity > 1.0)
            throw std::invalid_argument("fidelity must be in [0,1]");
    }
};

// ---------------------------------------------------------------------------
// Alternative page representations (for the full_html / accessibility_tree
// simulation modes)

inline std::string render_page_html(const env::SiteGraph& g, const env::EnvState& state) {
    const env::PageTemplate* p = g.find_page(state.page);
    std::ostringstream os;
    os << "<html><head><title>" << p->title << "</title></head><body>\n";
    for (const auto& e : p->elements) {
        std::string text = env::detail::substitute_vars(e.text_content, state.bindings);
        if (e.id)
            os << "  <" << e.tag_type << " id=\"" << *e.id << "\">" << text << "</" << e.tag_type
               << ">\n";
        else
            os << "  <p>" << text << "</p>\n";
    }
    os << "</body></html>";
    return os.str();
}

inline std::string render_page_ax_tree(const env::SiteGraph& g, const env::EnvState& state) {
    const env::PageTemplate* p = g.find_page(state.page);
    std::ostringstream os;
    os << "RootWebArea '" << p->title << "'";
    for (const auto& e : p->elements) {
        std::string text = env::detail::substitute_vars(e.text_content, state.bindings);
        os << "\n  " << e.tag_type;
        if (e.id) os << " [" << *e.id << "]";
        os << " '" << text << "'";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Interface

class WorldModel {
public:
    virtual ~WorldModel() = default;

    // Rolls a candidate forward: alternates state-change prediction and
    // action imagination until `horizon` changes exist or a stop is reached.
    // `salt` decorrelates otherwise-identical calls (e.g. the step index).
    virtual SimulatedTrajectory simulate(const Observation& obs, const Action& candidate,
                                         const SimConfig& cfg, const TaskInstance& task,
                                         std::uint64_t salt = 0) = 0;
};

// ---------------------------------------------------------------------------
// Oracle world model

namespace detail {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

// xorshift* stream; identical output on every platform
class Rng {
public:
    explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x2545f4914f6cdd1dull) {}
    std::uint64_t next() {
        s_ ^= s_ >> 12;
        s_ ^= s_ << 25;
        s_ ^= s_ >> 27;
        return s_ * 0x2545f4914f6cdd1dull;
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
    std::uint64_t s_;
};

}  // namespace detail

// Simulates against the true site graph. At fidelity 1.0 predictions are
// exact; below that, each step lies with probability (1 - fidelity) by
// reporting a different transition of the same graph.
class OracleWorldModel : public WorldModel {
public:
    explicit OracleWorldModel(const env::SiteGraph& graph) : graph_(graph) {}

    SimulatedTrajectory simulate(const Observation& obs, const Action& candidate,
                                 const SimConfig& cfg, const TaskInstance& task,
                                 std::uint64_t salt = 0) override {
        cfg.validate();
        env::EnvState sim_state = state_for_observation(obs);
        const env::GoalSpec& goal = graph_.goals.at(task.goal_id);
        detail::Rng rng(rng_seed(cfg.seed, obs, candidate, salt));

        SimulatedTrajectory traj;
        traj.root_digest = core::observation_digest(obs);
        traj.candidate = candidate;
        traj.horizon = cfg.horizon;

        Action current = candidate;
        for (int step = 1; step <= cfg.horizon; ++step) {
            StateChange change =
                predict_state_change(sim_state, current, cfg, rng, step);
            traj.steps.emplace_back(std::move(change), std::nullopt);
            if (current.kind == ActionKind::Stop) break;
            if (step == cfg.horizon) break;
            Action imagined = imagine_action(sim_state, goal);
            traj.steps.back().second = imagined;
            if (imagined.kind == ActionKind::Stop) break;
            current = imagined;
        }
        traj.validate();
        return traj;
    }

    // Exposed for direct testing of the prediction contract.
    StateChange predict_state_change(env::EnvState& sim_state, const Action& a,
                                     const SimConfig& cfg, detail::Rng& rng, int step_index) {
        StateChange change;
        change.step_index = step_index;
        change.producing_action = a;
        if (a.kind == ActionKind::Stop) {
            change.description = a.answer
                                     ? "The task ends here with the answer '" + *a.answer + "'."
                                     : "The task ends here with no answer.";
            return change;
        }
        std::string sig = core::action_signature(a);
        const env::TransitionEffect* truth = env::find_transition(graph_, sim_state.page, sig);
        if (!truth)
            throw UnknownTransition("no transition for '" + sig + "' on page '" +
                                    sim_state.page + "'");
        const env::TransitionEffect* reported = nullptr;
        if (rng.uniform() < cfg.fidelity) {
            reported = truth;
        } else {
            reported = pick_distractor(truth, rng);
            if (!reported) reported = truth;  // single-transition graph: nothing to lie with
        }
        change.description = describe(*reported, sim_state, cfg.state_representation);
        sim_state = env::apply_transition(sim_state, *reported, sig);
        return change;
    }

    // First action along a shortest path from the simulated state; stop with
    // the extracted answer once the goal is satisfiable there.
    Action imagine_action(const env::EnvState& sim_state, const env::GoalSpec& goal) const {
        if (env::state_satisfies_goal(graph_, sim_state, goal))
            return Action::stop(env::extract_answer(graph_, sim_state, goal));
        auto sig = env::first_action_toward_goal(graph_, sim_state, goal);
        if (!sig) return Action::stop();  // goal unreachable from the imagined state
        return core::parse_action_text(*sig);
    }

    env::EnvState state_for_observation(const Observation& obs) const {
        for (const auto& p : graph_.pages) {
            if (p.url == obs.url) {
                env::EnvState s;
                s.page = p.id;
                s.bindings = graph_.variables;
                return s;
            }
        }
        throw SimulationError("no site page matches observation URL '" + obs.url + "'");
    }

private:
    std::uint64_t rng_seed(std::uint64_t seed, const Observation& obs, const Action& candidate,
                           std::uint64_t salt) const {
        std::uint64_t h = detail::mix(0x9e3779b97f4a7c15ull, seed);
        h = detail::mix(h, llm::fnv1a(obs.url));
        h = detail::mix(h, llm::fnv1a(core::action_signature(candidate)));
        h = detail::mix(h, salt);
        return h;
    }

    const env::TransitionEffect* pick_distractor(const env::TransitionEffect* truth,
                                                 detail::Rng& rng) const {
        std::vector<const env::TransitionEffect*> pool;
        for (const auto& t : graph_.transitions)
            if (&t != truth &&
                (!truth || t.canonical_change_description != truth->canonical_change_description))
                pool.push_back(&t);
        if (pool.empty()) return nullptr;
        return pool[rng.below(pool.size())];
    }

    std::string describe(const env::TransitionEffect& t, const env::EnvState& from,
                         StateRepr repr) const {
        switch (repr) {
            case StateRepr::ChangeDescription:
                return t.canonical_change_description;
            case StateRepr::FullHtml: {
                env::EnvState next = env::apply_transition(from, t, t.action_pattern);
                return "HTML:\n" + render_page_html(graph_, next);
            }
            case StateRepr::AccessibilityTree: {
                env::EnvState next = env::apply_transition(from, t, t.action_pattern);
                return "AXTREE:\n" + render_page_ax_tree(graph_, next);
            }
        }
        return t.canonical_change_description;
    }

    const env::SiteGraph& graph_;
};

// ---------------------------------------------------------------------------
// LLM world model

class LlmWorldModel : public WorldModel {
public:
    LlmWorldModel(llm::Gateway& gateway, const std::string& prompts_dir,
                  double wm_temperature = 0.7, double proposal_temperature = 1.0)
        : gateway_(gateway),
          wm_template_(llm::load_template(prompts_dir, llm::TemplateName::WorldModel)),
          proposal_template_(llm::load_template(prompts_dir, llm::TemplateName::ActionProposal)),
          wm_temperature_(wm_temperature),
          proposal_temperature_(proposal_temperature) {}

    SimulatedTrajectory simulate(const Observation& obs, const Action& candidate,
                                 const SimConfig& cfg, const TaskInstance& task,
                                 std::uint64_t /*salt*/ = 0) override {
        cfg.validate();
        SimulatedTrajectory traj;
        traj.root_digest = core::observation_digest(obs);
        traj.candidate = candidate;
        traj.horizon = cfg.horizon;
        try {
            std::vector<StateChange> changes;
            Action current = candidate;
            for (int step = 1; step <= cfg.horizon; ++step) {
                StateChange change = predict_state_change(obs, changes, current, step, cfg);
                changes.push_back(change);
                traj.steps.emplace_back(std::move(change), std::nullopt);
                if (current.kind == ActionKind::Stop) break;
                if (step == cfg.horizon) break;
                Action imagined = imagine_action(obs, changes, task);
                traj.steps.back().second = imagined;
                if (imagined.kind == ActionKind::Stop) break;
                current = imagined;
            }
        } catch (const llm::CacheMiss&) {
            throw;
        } catch (const std::exception& e) {
            throw SimulationError(std::string("simulation failed: ") + e.what());
        }
        traj.validate();
        return traj;
    }

    StateChange predict_state_change(const Observation& obs,
                                     const std::vector<StateChange>& prior, const Action& a,
                                     int step_index, const SimConfig& cfg) {
        std::string repr_note;
        switch (cfg.state_representation) {
            case StateRepr::ChangeDescription: break;
            case StateRepr::FullHtml:
                repr_note = " Respond with the full HTML code of the resulting page.";
                break;
            case StateRepr::AccessibilityTree:
                repr_note = " Respond with the full accessibility tree of the resulting page.";
                break;
        }
        std::string prompt = llm::render_template(
            wm_template_, {{"initial_observation", core::render_observation(obs)},
                           {"prior_state_changes", join_changes(prior)},
                           {"action", core::action_signature(a) + repr_note}});
        llm::CompletionRequest req;
        req.messages.push_back(make_user_message(prompt, obs));
        req.temperature = wm_temperature_;
        std::string reply = gateway_.complete(req).at(0);

        std::size_t start = reply.find_first_not_of(" \t\r\n");
        const std::string marker = "State changes:";
        if (start == std::string::npos || reply.compare(start, marker.size(), marker) != 0)
            throw MalformedPrediction("world model reply does not begin with 'State changes:'");
        std::string desc = reply.substr(start + marker.size());
        std::size_t body = desc.find_first_not_of(" \t\r\n");
        desc = body == std::string::npos ? "" : desc.substr(body);
        if (desc.empty()) throw MalformedPrediction("empty state-change description");

        StateChange change;
        change.description = desc;
        change.step_index = step_index;
        change.producing_action = a;
        return change;
    }

    Action imagine_action(const Observation& obs, const std::vector<StateChange>& changes,
                          const TaskInstance& task) {
        std::string info = core::render_observation(obs);
        info += "\n\nPredicted state changes so far:\n" + join_changes(changes);
        std::string prompt = llm::render_template(
            proposal_template_,
            {{"Web Information", info},
             {"Task Objective", task.instruction},
             {"Web Page Screenshot Image", obs.image_ref.value_or("(no screenshot)")},
             {"Web URL", obs.url},
             {"Previous Tabs", format_tabs(obs)},
             {"Previous Action", obs.previous_action
                                     ? core::action_signature(*obs.previous_action)
                                     : "None"}});
        llm::CompletionRequest req;
        req.messages.push_back(make_user_message(prompt, obs));
        req.temperature = proposal_temperature_;
        return core::parse_action(gateway_.complete(req).at(0));
    }

private:
    static std::string join_changes(const std::vector<StateChange>& changes) {
        if (changes.empty()) return "(none)";
        std::ostringstream os;
        for (std::size_t i = 0; i < changes.size(); ++i) {
            if (i) os << "\n";
            os << i + 1 << ". " << core::action_signature(changes[i].producing_action) << " -> "
               << changes[i].description;
        }
        return os.str();
    }

    static std::string format_tabs(const Observation& obs) {
        std::ostringstream os;
        for (std::size_t i = 0; i < obs.open_tabs.size(); ++i) {
            if (i) os << " | ";
            os << "Tab " << obs.open_tabs[i].first << ": " << obs.open_tabs[i].second;
        }
        return os.str();
    }

    static llm::Message make_user_message(std::string text, const Observation& obs) {
        llm::Message m;
        m.role = "user";
        m.text = std::move(text);
        if (obs.image_ref) m.image_refs.push_back(*obs.image_ref);
        return m;
    }

    llm::Gateway& gateway_;
    llm::PromptTemplate wm_template_;
    llm::PromptTemplate proposal_template_;
    double wm_temperature_;
    double proposal_temperature_;
};

}  // namespace wd::wm
