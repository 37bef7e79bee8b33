#pragma once

// Agents: the MPC planner (propose -> refine -> simulate -> score -> argmax
// -> execute), the reactive baseline, the rerank-without-simulation
// ablation, and best-first tree search over real interactions.

#include <chrono>
#include <deque>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "webdreamer/core.hpp"
#include "webdreamer/env.hpp"
#include "webdreamer/judge.hpp"
#include "webdreamer/propose.hpp"
#include "webdreamer/wm.hpp"

namespace wd::plan {

using core::Action;
using core::ActionKind;
using core::Observation;
using core::ScoredTrajectory;
using core::TaskInstance;

struct EpisodeError : std::runtime_error {
    explicit EpisodeError(const std::string& what) : std::runtime_error(what) {}
};

enum class AgentKind { Mpc, Reactive, RerankOnly, TreeSearch };

inline const char* to_string(AgentKind a) {
    switch (a) {
        case AgentKind::Mpc: return "mpc";
        case AgentKind::Reactive: return "reactive";
        case AgentKind::RerankOnly: return "rerank_only";
        case AgentKind::TreeSearch: return "tree_search";
    }
    return "?";
}

inline AgentKind agent_from_string(const std::string& s) {
    if (s == "mpc") return AgentKind::Mpc;
    if (s == "reactive") return AgentKind::Reactive;
    if (s == "rerank_only") return AgentKind::RerankOnly;
    if (s == "tree_search") return AgentKind::TreeSearch;
    throw std::invalid_argument("unknown agent '" + s + "'");
}

struct TreeConfig {
    int branching = 3;
    int max_depth = 4;
    int expansion_budget = 20;

    void validate() const {
        if (branching < 1 || max_depth < 1 || expansion_budget < 0)
            throw std::invalid_argument("tree search parameters must be positive");
    }
};

struct PlannerConfig {
    wm::SimConfig sim;
    int judge_samples = 3;
    int k = 5;
    int max_steps = 0;  // 0: use the task's budget
    int repeat_limit = 3;
    bool cumulative_repeat = false;  // count repeats across the whole episode
    bool self_refine = true;
    TreeConfig tree;

    void validate() const {
        sim.validate();
        if (judge_samples < 1 || k < 1 || repeat_limit < 1)
            throw std::invalid_argument("judge_samples, k, repeat_limit must be >= 1");
        tree.validate();
    }
};

struct StepDecision {
    std::vector<Action> candidates;
    std::vector<Action> refined;
    std::vector<ScoredTrajectory> scored;  // parallel to refined
    Action chosen;
    std::size_t chosen_index = 0;
    bool low_confidence = false;  // every aggregate was 0
};

// Argmax with ties broken by lowest index; invariant under positive scaling.
inline std::size_t choose_best(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("choose_best needs >= 1 score");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

// ---------------------------------------------------------------------------
// Planning steps

inline StepDecision plan_step(propose::Proposer& proposer, wm::WorldModel& world,
                              judge::Judge& jdg, const TaskInstance& task, const Observation& obs,
                              const std::vector<Action>& history, const PlannerConfig& cfg) {
    StepDecision d;
    d.candidates = proposer.get_candidates(task, obs, history, cfg.k);
    d.refined = cfg.self_refine ? proposer.self_refine(task, obs, history, d.candidates)
                                : d.candidates;

    std::vector<std::future<ScoredTrajectory>> futures;
    futures.reserve(d.refined.size());
    for (std::size_t i = 0; i < d.refined.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&, i] {
            core::SimulatedTrajectory traj =
                world.simulate(obs, d.refined[i], cfg.sim, task, history.size());
            return jdg.score_trajectory(task, history, obs, traj, cfg.judge_samples);
        }));
    }
    std::vector<double> aggregates;
    for (auto& f : futures) {
        d.scored.push_back(f.get());
        aggregates.push_back(d.scored.back().aggregate);
    }
    d.chosen_index = choose_best(aggregates);
    d.chosen = d.refined[d.chosen_index];
    d.low_confidence = *std::max_element(aggregates.begin(), aggregates.end()) == 0.0;
    return d;
}

inline Action reactive_step(propose::Proposer& proposer, const TaskInstance& task,
                            const Observation& obs, const std::vector<Action>& history) {
    return proposer.propose_one(task, obs, history);
}

inline StepDecision rerank_only_step(propose::Proposer& proposer, judge::Judge& jdg,
                                     const TaskInstance& task, const Observation& obs,
                                     const std::vector<Action>& history,
                                     const PlannerConfig& cfg) {
    StepDecision d;
    d.candidates = proposer.get_candidates(task, obs, history, cfg.k);
    d.refined = cfg.self_refine ? proposer.self_refine(task, obs, history, d.candidates)
                                : d.candidates;
    std::vector<double> aggregates;
    for (const Action& a : d.refined) {
        double score = jdg.score_action(task, history, obs, a);
        ScoredTrajectory st;
        st.trajectory.root_digest = core::observation_digest(obs);
        st.trajectory.candidate = a;  // no simulated steps by construction
        st.samples = {score};
        st.aggregate = score;
        d.scored.push_back(std::move(st));
        aggregates.push_back(score);
    }
    d.chosen_index = choose_best(aggregates);
    d.chosen = d.refined[d.chosen_index];
    d.low_confidence = *std::max_element(aggregates.begin(), aggregates.end()) == 0.0;
    return d;
}

// ---------------------------------------------------------------------------
// Termination

struct Termination {
    bool terminate = false;
    std::string reason;  // stop_issued | max_steps | repeated_action
};

inline Termination termination_check(const std::vector<Action>& history,
                                     const std::optional<Action>& last_action, int step,
                                     int max_steps, const PlannerConfig& cfg) {
    if (last_action && last_action->kind == ActionKind::Stop) return {true, "stop_issued"};
    if (step >= max_steps) return {true, "max_steps"};
    if (!history.empty()) {
        std::string sig = core::action_signature(history.back());
        int repeats = 0;
        if (cfg.cumulative_repeat) {
            for (const Action& a : history)
                if (core::action_signature(a) == sig) ++repeats;
        } else {
            for (auto it = history.rbegin(); it != history.rend(); ++it) {
                if (core::action_signature(*it) != sig) break;
                ++repeats;
            }
        }
        if (repeats > cfg.repeat_limit) return {true, "repeated_action"};
    }
    return {};
}

// ---------------------------------------------------------------------------
// Episodes

struct RunRecord {
    std::string task_id;
    std::string agent;
    std::string site;
    std::string difficulty;
    std::vector<std::string> actions;  // executed signatures
    std::vector<StepDecision> step_decisions;
    int reward = 0;
    double milestones_satisfied = 0.0;
    long real_action_count = 0;
    long simulated_trajectory_count = 0;
    int irreversible_count = 0;
    double wall_clock_seconds = 0.0;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string outcome = "ok";  // ok | error | budget_exhausted
};

namespace detail {

inline std::string config_digest(const PlannerConfig& cfg) {
    std::ostringstream os;
    os << cfg.sim.horizon << '|' << static_cast<int>(cfg.sim.state_representation) << '|'
       << cfg.sim.fidelity << '|' << cfg.sim.seed << '|' << cfg.judge_samples << '|' << cfg.k
       << '|' << cfg.max_steps << '|' << cfg.repeat_limit << '|' << cfg.cumulative_repeat << '|'
       << cfg.self_refine << '|' << cfg.tree.branching << '|' << cfg.tree.max_depth << '|'
       << cfg.tree.expansion_budget;
    std::ostringstream hex;
    hex << std::hex << llm::fnv1a(os.str());
    return hex.str();
}

}  // namespace detail

inline RunRecord tree_search_episode(env::Simulator& sim, const TaskInstance& task,
                                     const PlannerConfig& cfg, propose::Proposer& proposer,
                                     judge::Judge& jdg);

// Runs one episode of the requested agent against `sim`, which must be
// bound to `task` by this call. Sub-failures are captured in the record
// (outcome = "error"), never swallowed silently.
inline RunRecord run_episode(AgentKind agent, env::Simulator& sim, const TaskInstance& task,
                             const PlannerConfig& cfg, propose::Proposer& proposer,
                             wm::WorldModel& world, judge::Judge& jdg) {
    cfg.validate();
    if (agent == AgentKind::TreeSearch) return tree_search_episode(sim, task, cfg, proposer, jdg);

    RunRecord rec;
    rec.task_id = task.id;
    rec.agent = to_string(agent);
    rec.site = sim.graph().name;
    rec.difficulty = task.difficulty;
    rec.seed = cfg.sim.seed;
    rec.config_digest = detail::config_digest(cfg);

    auto t0 = std::chrono::steady_clock::now();
    sim.reset_execute_count();
    int max_steps = cfg.max_steps > 0 ? cfg.max_steps : task.max_steps;

    try {
        Observation obs = sim.reset(task);
        std::vector<Action> history;
        int step = 0;
        for (;;) {
            Action action;
            if (agent == AgentKind::Reactive) {
                action = reactive_step(proposer, task, obs, history);
            } else {
                StepDecision d = agent == AgentKind::Mpc
                                     ? plan_step(proposer, world, jdg, task, obs, history, cfg)
                                     : rerank_only_step(proposer, jdg, task, obs, history, cfg);
                rec.simulated_trajectory_count +=
                    agent == AgentKind::Mpc ? static_cast<long>(d.scored.size()) : 0;
                action = d.chosen;
                rec.step_decisions.push_back(std::move(d));
            }
            env::StepResult res = sim.execute(action);
            obs = res.observation;
            history.push_back(action);
            rec.actions.push_back(core::action_signature(action));
            rec.reward = res.reward;
            ++step;
            Termination t = termination_check(history, action, step, max_steps, cfg);
            if (t.terminate) break;
        }
        rec.milestones_satisfied =
            env::milestones_satisfied_fraction(sim.graph(), sim.state(), sim.goal(), rec.reward);
    } catch (const std::exception& e) {
        rec.outcome = "error";
        rec.actions.push_back(std::string("#error: ") + e.what());
    }

    rec.real_action_count = sim.execute_count();
    rec.irreversible_count = rec.outcome == "ok" ? sim.state().irreversible_count : 0;
    rec.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

// Best-first search over real interactions: nodes are action sequences,
// valued by the judge on the real observation they lead to; earlier states
// are restored by reset-and-replay. Every execute, including replays,
// counts toward the record's real-action total.
inline RunRecord tree_search_episode(env::Simulator& sim, const TaskInstance& task,
                                     const PlannerConfig& cfg, propose::Proposer& proposer,
                                     judge::Judge& jdg) {
    cfg.validate();
    RunRecord rec;
    rec.task_id = task.id;
    rec.agent = to_string(AgentKind::TreeSearch);
    rec.site = sim.graph().name;
    rec.difficulty = task.difficulty;
    rec.seed = cfg.sim.seed;
    rec.config_digest = detail::config_digest(cfg);

    auto t0 = std::chrono::steady_clock::now();
    sim.reset_execute_count();

    struct Node {
        std::vector<Action> seq;
        double value = 0.0;
        std::size_t order = 0;
    };

    try {
        Observation root = sim.reset(task);
        std::vector<Node> frontier{{{}, 0.0, 0}};
        std::size_t next_order = 1;
        int expansions = 0;
        bool done = false;

        while (!frontier.empty() && !done) {
            if (expansions >= cfg.tree.expansion_budget) {
                rec.outcome = "budget_exhausted";
                break;
            }
            auto best = std::max_element(
                frontier.begin(), frontier.end(), [](const Node& a, const Node& b) {
                    if (a.value != b.value) return a.value < b.value;
                    return a.order > b.order;  // prefer earlier insertion
                });
            Node node = *best;
            frontier.erase(best);
            ++expansions;

            Observation at = sim.replay(node.seq);
            std::vector<Action> candidates =
                proposer.get_candidates(task, at, node.seq, cfg.tree.branching);
            for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
                if (ci > 0) at = sim.replay(node.seq);  // undo the sibling's effect
                const Action& a = candidates[ci];
                env::StepResult res = sim.execute(a);
                std::vector<Action> child_seq = node.seq;
                child_seq.push_back(a);
                if (res.terminal) {
                    if (res.reward == 1) {
                        rec.reward = 1;
                        rec.actions.clear();
                        for (const Action& h : child_seq)
                            rec.actions.push_back(core::action_signature(h));
                        done = true;
                        break;
                    }
                    continue;  // wrong stop: dead leaf
                }
                double value = jdg.score_state(task, root, res.observation);
                if (static_cast<int>(child_seq.size()) < cfg.tree.max_depth)
                    frontier.push_back({std::move(child_seq), value, next_order++});
            }
        }
        if (!done && rec.outcome == "ok" && frontier.empty()) rec.outcome = "budget_exhausted";
        rec.milestones_satisfied =
            env::milestones_satisfied_fraction(sim.graph(), sim.state(), sim.goal(), rec.reward);
    } catch (const std::exception& e) {
        rec.outcome = "error";
        rec.actions.push_back(std::string("#error: ") + e.what());
    }

    rec.real_action_count = sim.execute_count();
    rec.irreversible_count = rec.outcome != "error" ? sim.state().irreversible_count : 0;
    rec.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

}  // namespace wd::plan
