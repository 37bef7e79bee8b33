#pragma once

// Deterministic website simulator: pages, guarded transitions, variables,
// goal predicates, BFS goal distances, and the reset/execute/replay cycle.
// Site graphs load from JSON (see docs/site-graph-schema.md).

#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "webdreamer/core.hpp"

namespace wd::env {

using core::Action;
using core::ActionKind;
using core::ElementRecord;
using core::Observation;
using core::TaskInstance;
using json = nlohmann::json;

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};
struct UnknownTask : std::runtime_error {
    explicit UnknownTask(const std::string& what) : std::runtime_error(what) {}
};
struct NotReset : std::runtime_error {
    explicit NotReset(const std::string& what) : std::runtime_error(what) {}
};
struct IrreversibleReplay : std::runtime_error {
    explicit IrreversibleReplay(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Site graph

struct PageTemplate {
    std::string id;
    std::string url;    // may reference {variables}
    std::string title;
    std::vector<ElementRecord> elements;  // text_content may reference {variables}
};

struct TransitionEffect {
    std::string source_page;
    std::string action_pattern;  // action signature; '*' matches one whole field
    std::string target_page;
    std::vector<std::pair<std::string, std::string>> variable_updates;  // name -> value expr
    bool irreversible = false;
    std::string canonical_change_description;
};

struct Milestone {
    // kinds: on_page (final page equals `page`), action_taken (history
    // contains `signature`), var_equals (`name` bound to `value`)
    std::string kind;
    std::string page;
    std::string signature;
    std::string name;
    std::string value;
};

struct GoalSpec {
    enum class Kind { ReachPage, StopWithAnswer, Conjunction };
    Kind kind = Kind::ReachPage;
    std::optional<std::string> target_page;
    std::optional<std::string> answer;  // matched after normalization
    std::vector<Milestone> milestones;
};

struct EnvState {
    std::string page;
    std::map<std::string, std::string> bindings;
    std::vector<std::string> history;  // executed action signatures
    int irreversible_count = 0;
};

struct SiteGraph {
    std::string name;
    std::vector<PageTemplate> pages;             // declaration order preserved
    std::vector<TransitionEffect> transitions;   // declaration order preserved
    std::map<std::string, std::string> variables;
    std::map<std::string, GoalSpec> goals;       // task-id -> goal
    std::vector<TaskInstance> tasks;

    const PageTemplate* find_page(const std::string& id) const {
        for (const auto& p : pages)
            if (p.id == id) return &p;
        return nullptr;
    }
    const TaskInstance* find_task(const std::string& id) const {
        for (const auto& t : tasks)
            if (t.id == id) return &t;
        return nullptr;
    }
};

namespace detail {

inline std::string substitute_vars(const std::string& tmpl,
                                   const std::map<std::string, std::string>& bindings) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{') {
            std::size_t close = tmpl.find('}', i);
            if (close != std::string::npos) {
                std::string name = tmpl.substr(i + 1, close - i - 1);
                auto it = bindings.find(name);
                if (it != bindings.end()) {
                    out += it->second;
                    i = close;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
    }
    return out;
}

inline std::vector<std::string> collect_var_refs(const std::string& tmpl) {
    std::vector<std::string> refs;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{') {
            std::size_t close = tmpl.find('}', i);
            if (close == std::string::npos) break;
            refs.push_back(tmpl.substr(i + 1, close - i - 1));
            i = close;
        }
    }
    return refs;
}

// Splits an action signature into kind + bracketed fields (escape-aware).
inline std::vector<std::string> signature_fields(const std::string& sig) {
    std::vector<std::string> parts;
    std::size_t br = sig.find('[');
    parts.push_back(sig.substr(0, br));
    if (br == std::string::npos) return parts;
    std::size_t i = br;
    while (i < sig.size() && sig[i] == '[') {
        ++i;
        std::string f;
        while (i < sig.size()) {
            if (sig[i] == '\\' && i + 1 < sig.size()) {
                f.push_back(sig[i]);
                f.push_back(sig[i + 1]);
                i += 2;
                continue;
            }
            if (sig[i] == ']') {
                ++i;
                break;
            }
            f.push_back(sig[i]);
            ++i;
        }
        parts.push_back(f);
    }
    return parts;
}

inline bool signature_matches(const std::string& pattern, const std::string& sig) {
    if (pattern == sig) return true;
    if (pattern.find('*') == std::string::npos) return false;
    auto pf = signature_fields(pattern);
    auto sf = signature_fields(sig);
    if (pf.size() != sf.size() || pf[0] != sf[0]) return false;
    for (std::size_t i = 1; i < pf.size(); ++i)
        if (pf[i] != "*" && pf[i] != sf[i]) return false;
    return true;
}

inline std::string normalize_answer(const std::string& s) {
    std::string t = core::detail::normalize_whitespace(s);
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loading

inline SiteGraph site_from_json(const json& doc) {
    SiteGraph g;
    try {
        g.name = doc.value("site", "unnamed");
        if (!doc.contains("pages") || !doc["pages"].is_object())
            throw ParseError("site graph needs a 'pages' object");
        for (const auto& [pid, pj] : doc["pages"].items()) {
            PageTemplate p;
            p.id = pid;
            p.url = pj.value("url", "");
            p.title = pj.value("title", pid);
            for (const auto& ej : pj.value("elements", json::array())) {
                ElementRecord e;
                if (ej.contains("id") && !ej["id"].is_null()) e.id = ej["id"].get<int>();
                e.tag_type = ej.value("tag", "StaticText");
                e.text_content = ej.value("text", "");
                p.elements.push_back(e);
            }
            g.pages.push_back(std::move(p));
        }
        const json vars = doc.value("variables", json::object());
        for (const auto& [name, value] : vars.items())
            g.variables[name] = value.get<std::string>();
        for (const auto& tj : doc.value("transitions", json::array())) {
            TransitionEffect t;
            t.source_page = tj.at("page").get<std::string>();
            t.action_pattern = tj.at("action").get<std::string>();
            const json& ej = tj.at("effect");
            t.target_page = ej.at("target").get<std::string>();
            for (const auto& uj : ej.value("updates", json::array()))
                t.variable_updates.emplace_back(uj.at(0).get<std::string>(),
                                                uj.at(1).get<std::string>());
            t.irreversible = ej.value("irreversible", false);
            t.canonical_change_description = ej.at("change").get<std::string>();
            g.transitions.push_back(std::move(t));
        }
        for (const auto& tj : doc.value("tasks", json::array())) {
            TaskInstance t;
            t.id = tj.at("id").get<std::string>();
            t.instruction = tj.at("instruction").get<std::string>();
            for (const auto& r : tj.value("instruction_image_refs", json::array()))
                t.instruction_image_refs.push_back(r.get<std::string>());
            t.start_page = tj.at("start_page").get<std::string>();
            t.max_steps = tj.value("max_steps", 10);
            t.difficulty = tj.value("difficulty", "medium");
            t.goal_id = t.id;
            if (t.max_steps < 1) throw ParseError("task '" + t.id + "': max_steps must be >= 1");

            const json& gj = tj.at("goal");
            GoalSpec goal;
            std::string kind = gj.at("kind").get<std::string>();
            if (kind == "reach_page")
                goal.kind = GoalSpec::Kind::ReachPage;
            else if (kind == "stop_with_answer")
                goal.kind = GoalSpec::Kind::StopWithAnswer;
            else if (kind == "conjunction")
                goal.kind = GoalSpec::Kind::Conjunction;
            else
                throw ParseError("task '" + t.id + "': unknown goal kind '" + kind + "'");
            if (gj.contains("target_page")) goal.target_page = gj["target_page"].get<std::string>();
            if (gj.contains("answer")) goal.answer = gj["answer"].get<std::string>();
            if (goal.kind != GoalSpec::Kind::StopWithAnswer && !goal.target_page)
                throw ParseError("task '" + t.id + "': goal needs target_page");
            if (goal.kind != GoalSpec::Kind::ReachPage && !goal.answer)
                throw ParseError("task '" + t.id + "': goal needs answer");
            for (const auto& mj : gj.value("milestones", json::array())) {
                Milestone m;
                m.kind = mj.at("kind").get<std::string>();
                m.page = mj.value("page", "");
                m.signature = mj.value("signature", "");
                m.name = mj.value("name", "");
                m.value = mj.value("value", "");
                goal.milestones.push_back(std::move(m));
            }
            g.goals[t.id] = std::move(goal);
            g.tasks.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("site graph: ") + e.what());
    }

    // referential integrity
    for (const auto& t : g.transitions) {
        if (!g.find_page(t.source_page))
            throw ValidationError("transition from undeclared page '" + t.source_page + "'");
        if (!g.find_page(t.target_page))
            throw ValidationError("transition to undeclared page '" + t.target_page + "'");
        if (t.canonical_change_description.empty())
            throw ValidationError("transition " + t.source_page + " -> " + t.target_page +
                                  " has an empty change description");
    }
    for (const auto& p : g.pages) {
        auto check_refs = [&](const std::string& s) {
            for (const auto& ref : detail::collect_var_refs(s))
                if (!g.variables.count(ref))
                    throw ValidationError("page '" + p.id + "' references undeclared variable '" +
                                          ref + "'");
        };
        check_refs(p.url);
        for (const auto& e : p.elements) check_refs(e.text_content);
    }
    for (const auto& t : g.tasks) {
        if (!g.find_page(t.start_page))
            throw ValidationError("task '" + t.id + "' starts on undeclared page '" +
                                  t.start_page + "'");
        const GoalSpec& goal = g.goals.at(t.id);
        if (goal.target_page && !g.find_page(*goal.target_page))
            throw ValidationError("task '" + t.id + "' targets undeclared page '" +
                                  *goal.target_page + "'");
    }
    return g;
}

inline SiteGraph load_site(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open site graph file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return site_from_json(doc);
}

// ---------------------------------------------------------------------------
// Pure state-level queries (usable on copies, no simulator needed)

inline const TransitionEffect* find_transition(const SiteGraph& g, const std::string& page,
                                               const std::string& signature) {
    for (const auto& t : g.transitions)
        if (t.source_page == page && detail::signature_matches(t.action_pattern, signature))
            return &t;
    return nullptr;
}

inline const TransitionEffect* find_transition_by_description(const SiteGraph& g,
                                                              const std::string& description) {
    for (const auto& t : g.transitions)
        if (t.canonical_change_description == description) return &t;
    return nullptr;
}

inline std::vector<const TransitionEffect*> transitions_from(const SiteGraph& g,
                                                             const std::string& page) {
    std::vector<const TransitionEffect*> out;
    for (const auto& t : g.transitions)
        if (t.source_page == page) out.push_back(&t);
    return out;
}

// Applies a transition to a copied state; records the signature in history.
inline EnvState apply_transition(const EnvState& state, const TransitionEffect& t,
                                 const std::string& signature) {
    EnvState next = state;
    next.page = t.target_page;
    for (const auto& [name, expr] : t.variable_updates) {
        if (expr.rfind("+=", 0) == 0) {
            long cur = 0;
            auto it = next.bindings.find(name);
            if (it != next.bindings.end() && !it->second.empty()) cur = std::stol(it->second);
            next.bindings[name] = std::to_string(cur + std::stol(expr.substr(2)));
        } else {
            next.bindings[name] = expr;
        }
    }
    next.history.push_back(signature);
    if (t.irreversible) ++next.irreversible_count;
    return next;
}

inline Observation observe_state(const SiteGraph& g, const EnvState& state,
                                 std::optional<Action> previous_action = std::nullopt) {
    const PageTemplate* p = g.find_page(state.page);
    if (!p) throw ValidationError("state references undeclared page '" + state.page + "'");
    Observation obs;
    obs.url = detail::substitute_vars(p->url, state.bindings);
    for (const auto& e : p->elements) {
        ElementRecord r = e;
        r.text_content = detail::substitute_vars(e.text_content, state.bindings);
        obs.elements.push_back(std::move(r));
    }
    auto banner = state.bindings.find("_banner");
    if (banner != state.bindings.end() && !banner->second.empty()) {
        ElementRecord err;
        err.tag_type = "StaticText";
        err.text_content = banner->second;
        obs.elements.push_back(std::move(err));
    }
    obs.open_tabs = {{0, p->title}};
    obs.previous_action = std::move(previous_action);
    return obs;
}

// The answer visible on the current page, if any element's text contains the
// goal's expected answer after normalization. Models "reading" the page.
inline std::optional<std::string> extract_answer(const SiteGraph& g, const EnvState& state,
                                                 const GoalSpec& goal) {
    if (!goal.answer) return std::nullopt;
    const PageTemplate* p = g.find_page(state.page);
    if (!p) return std::nullopt;
    std::string want = detail::normalize_answer(*goal.answer);
    for (const auto& e : p->elements) {
        std::string text = detail::normalize_answer(
            detail::substitute_vars(e.text_content, state.bindings));
        if (text.find(want) != std::string::npos) return goal.answer;
    }
    return std::nullopt;
}

// A state "satisfies" the goal when stop could be issued from it with
// reward 1: the target page is reached and, for answer goals, the answer is
// readable off the current page.
inline bool state_satisfies_goal(const SiteGraph& g, const EnvState& state, const GoalSpec& goal) {
    switch (goal.kind) {
        case GoalSpec::Kind::ReachPage:
            return state.page == *goal.target_page;
        case GoalSpec::Kind::StopWithAnswer:
            return extract_answer(g, state, goal).has_value();
        case GoalSpec::Kind::Conjunction:
            return state.page == *goal.target_page && extract_answer(g, state, goal).has_value();
    }
    return false;
}

// Whether issuing `stop` (with the given answer, if any) in `state` earns
// reward 1 under `goal`: the state must satisfy the goal (for answer goals
// the answer must be readable off the current page) and, for answer goals,
// the supplied answer must match after normalization.
inline bool goal_satisfied(const SiteGraph& g, const GoalSpec& goal, const EnvState& state,
                           const std::optional<std::string>& answer) {
    bool answer_ok = true;
    if (goal.kind != GoalSpec::Kind::ReachPage) {
        answer_ok = answer && goal.answer &&
                    detail::normalize_answer(*answer) == detail::normalize_answer(*goal.answer);
    }
    return answer_ok && state_satisfies_goal(g, state, goal);
}

// Length of the shortest action sequence (stop excluded) from `state` to a
// goal-satisfying state; kUnreachable if none exists. BFS over the
// transition relation; variable guards are ignored (page-level search).
inline int oracle_distance(const SiteGraph& g, const EnvState& state, const GoalSpec& goal) {
    if (state_satisfies_goal(g, state, goal)) return 0;
    std::set<std::string> seen{state.page};
    std::deque<std::pair<std::string, int>> frontier{{state.page, 0}};
    while (!frontier.empty()) {
        auto [page, dist] = frontier.front();
        frontier.pop_front();
        for (const TransitionEffect* t : transitions_from(g, page)) {
            if (seen.count(t->target_page)) continue;
            seen.insert(t->target_page);
            EnvState probe = state;
            probe.page = t->target_page;
            if (state_satisfies_goal(g, probe, goal)) return dist + 1;
            frontier.emplace_back(t->target_page, dist + 1);
        }
    }
    return kUnreachable;
}

// First action signature along one shortest path to the goal, if reachable.
inline std::optional<std::string> first_action_toward_goal(const SiteGraph& g,
                                                           const EnvState& state,
                                                           const GoalSpec& goal) {
    if (state_satisfies_goal(g, state, goal)) return std::nullopt;
    struct Node {
        std::string page;
        std::string first_sig;
    };
    std::set<std::string> seen{state.page};
    std::deque<Node> frontier;
    for (const TransitionEffect* t : transitions_from(g, state.page)) {
        if (seen.count(t->target_page)) continue;
        seen.insert(t->target_page);
        EnvState probe = state;
        probe.page = t->target_page;
        // concrete signature: patterns without wildcards are signatures already
        std::string sig = t->action_pattern;
        if (state_satisfies_goal(g, probe, goal)) return sig;
        frontier.push_back({t->target_page, sig});
    }
    while (!frontier.empty()) {
        Node n = frontier.front();
        frontier.pop_front();
        for (const TransitionEffect* t : transitions_from(g, n.page)) {
            if (seen.count(t->target_page)) continue;
            seen.insert(t->target_page);
            EnvState probe = state;
            probe.page = t->target_page;
            if (state_satisfies_goal(g, probe, goal)) return n.first_sig;
            frontier.push_back({t->target_page, n.first_sig});
        }
    }
    return std::nullopt;
}

inline double milestones_satisfied_fraction(const SiteGraph& g, const EnvState& state,
                                            const GoalSpec& goal, int reward) {
    (void)g;
    if (goal.milestones.empty()) return static_cast<double>(reward);  // documented fallback
    int hit = 0;
    for (const Milestone& m : goal.milestones) {
        bool ok = false;
        if (m.kind == "on_page") {
            ok = state.page == m.page;
        } else if (m.kind == "action_taken") {
            ok = std::find(state.history.begin(), state.history.end(), m.signature) !=
                 state.history.end();
        } else if (m.kind == "var_equals") {
            auto it = state.bindings.find(m.name);
            ok = it != state.bindings.end() && it->second == m.value;
        }
        if (ok) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(goal.milestones.size());
}

// ---------------------------------------------------------------------------
// Simulator

struct StepResult {
    Observation observation;
    bool terminal = false;
    int reward = 0;
};

// Single-writer simulator bound to one site graph. reset/execute/replay
// require exclusive access; copies of the state can be queried concurrently.
class Simulator {
public:
    explicit Simulator(SiteGraph graph, bool strict_irreversible = false)
        : graph_(std::move(graph)), strict_irreversible_(strict_irreversible) {}

    const SiteGraph& graph() const { return graph_; }

    Observation reset(const TaskInstance& task) {
        if (!graph_.find_page(task.start_page))
            throw UnknownTask("task '" + task.id + "' starts on unknown page '" +
                              task.start_page + "'");
        if (!graph_.goals.count(task.goal_id))
            throw UnknownTask("task '" + task.id + "' has no goal spec");
        task_ = task;
        state_ = EnvState{};
        state_.page = task.start_page;
        state_.bindings = graph_.variables;
        last_action_.reset();
        terminal_ = false;
        active_ = true;
        return observe();
    }

    Observation observe() const {
        require_active();
        return observe_state(graph_, state_, last_action_);
    }

    StepResult execute(const Action& a) {
        require_active();
        std::string sig = core::action_signature(a);
        state_.bindings.erase("_banner");
        ++execute_count_;
        if (a.kind == ActionKind::Stop) {
            state_.history.push_back(sig);
            const GoalSpec& goal = graph_.goals.at(task_.goal_id);
            bool ok = goal_satisfied(graph_, goal, state_, a.answer);
            terminal_ = true;
            last_action_ = a;
            return {observe(), true, ok ? 1 : 0};
        }
        const TransitionEffect* t = find_transition(graph_, state_.page, sig);
        if (t) {
            if (strict_irreversible_ && replaying_ && t->irreversible)
                throw IrreversibleReplay("replay would cross irreversible transition '" + sig +
                                         "' on page '" + state_.page + "'");
            state_ = apply_transition(state_, *t, sig);
        } else {
            // stray action: nothing happens, a visible error banner appears
            state_.history.push_back(sig);
            state_.bindings["_banner"] = "Error: nothing happened for action " + sig;
        }
        last_action_ = a;
        return {observe(), false, 0};
    }

    // reset + re-execute; the sandbox restore mechanism tree search relies on.
    Observation replay(const std::vector<Action>& actions) {
        require_bound();
        reset(task_);
        replaying_ = true;
        Observation obs = observe();
        try {
            for (const Action& a : actions) obs = execute(a).observation;
        } catch (...) {
            replaying_ = false;
            throw;
        }
        replaying_ = false;
        return obs;
    }

    const EnvState& state() const {
        require_active();
        return state_;
    }
    const TaskInstance& task() const {
        require_bound();
        return task_;
    }
    const GoalSpec& goal() const {
        require_bound();
        return graph_.goals.at(task_.goal_id);
    }
    bool terminal() const { return terminal_; }

    // real-environment action counter (includes replayed actions)
    long execute_count() const { return execute_count_; }
    void reset_execute_count() { execute_count_ = 0; }

private:
    void require_active() const {
        if (!active_) throw NotReset("environment has not been reset");
    }
    void require_bound() const {
        if (task_.id.empty()) throw NotReset("environment is not bound to a task");
    }

    SiteGraph graph_;
    bool strict_irreversible_ = false;
    bool replaying_ = false;
    TaskInstance task_;
    EnvState state_;
    std::optional<Action> last_action_;
    bool terminal_ = false;
    bool active_ = false;
    long execute_count_ = 0;
};

}  // namespace wd::env
