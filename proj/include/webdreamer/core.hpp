#pragma once

// Core domain types for the web-agent planner: the action grammar,
// observations and their text rendering, and simulated-trajectory records.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wd::core {

// ---------------------------------------------------------------------------
// Errors

struct MalformedAction : std::runtime_error {
    explicit MalformedAction(const std::string& what) : std::runtime_error(what) {}
};

struct MissingSummaryPhrase : std::runtime_error {
    explicit MissingSummaryPhrase(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Action

enum class ActionKind {
    Click,
    Hover,
    Type,
    Press,
    Goto,
    GoBack,
    GoForward,
    NewTab,
    TabFocus,
    TabClose,
    Scroll,
    Stop,
};

enum class ScrollDirection { Up, Down };

inline const char* to_string(ActionKind k) {
    switch (k) {
        case ActionKind::Click: return "click";
        case ActionKind::Hover: return "hover";
        case ActionKind::Type: return "type";
        case ActionKind::Press: return "press";
        case ActionKind::Goto: return "goto";
        case ActionKind::GoBack: return "go_back";
        case ActionKind::GoForward: return "go_forward";
        case ActionKind::NewTab: return "new_tab";
        case ActionKind::TabFocus: return "tab_focus";
        case ActionKind::TabClose: return "tab_close";
        case ActionKind::Scroll: return "scroll";
        case ActionKind::Stop: return "stop";
    }
    return "?";
}

inline std::optional<ActionKind> action_kind_from_string(const std::string& s) {
    if (s == "click") return ActionKind::Click;
    if (s == "hover") return ActionKind::Hover;
    if (s == "type") return ActionKind::Type;
    if (s == "press") return ActionKind::Press;
    if (s == "goto") return ActionKind::Goto;
    if (s == "go_back") return ActionKind::GoBack;
    if (s == "go_forward") return ActionKind::GoForward;
    if (s == "new_tab") return ActionKind::NewTab;
    if (s == "tab_focus") return ActionKind::TabFocus;
    if (s == "tab_close" || s == "close_tab") return ActionKind::TabClose;
    if (s == "scroll") return ActionKind::Scroll;
    if (s == "stop") return ActionKind::Stop;
    return std::nullopt;
}

// One navigation action. Only the fields required by `kind` are populated.
struct Action {
    ActionKind kind = ActionKind::Stop;
    std::optional<int> elem;                    // click, hover, type
    std::optional<std::string> text;            // type
    bool press_enter_after = true;              // type
    std::optional<std::string> key_comb;        // press
    std::optional<std::string> url;             // goto
    std::optional<int> tab_index;               // tab_focus
    std::optional<ScrollDirection> direction;   // scroll
    std::optional<std::string> answer;          // stop

    static Action click(int elem) {
        Action a;
        a.kind = ActionKind::Click;
        a.elem = elem;
        return a;
    }
    static Action hover(int elem) {
        Action a;
        a.kind = ActionKind::Hover;
        a.elem = elem;
        return a;
    }
    static Action type_text(int elem, std::string text, bool enter = true) {
        Action a;
        a.kind = ActionKind::Type;
        a.elem = elem;
        a.text = std::move(text);
        a.press_enter_after = enter;
        return a;
    }
    static Action press(std::string key_comb) {
        Action a;
        a.kind = ActionKind::Press;
        a.key_comb = std::move(key_comb);
        return a;
    }
    static Action go_to(std::string url) {
        Action a;
        a.kind = ActionKind::Goto;
        a.url = std::move(url);
        return a;
    }
    static Action simple(ActionKind k) {
        Action a;
        a.kind = k;
        return a;
    }
    static Action tab_focus(int index) {
        Action a;
        a.kind = ActionKind::TabFocus;
        a.tab_index = index;
        return a;
    }
    static Action scroll(ScrollDirection d) {
        Action a;
        a.kind = ActionKind::Scroll;
        a.direction = d;
        return a;
    }
    static Action stop(std::optional<std::string> answer = std::nullopt) {
        Action a;
        a.kind = ActionKind::Stop;
        a.answer = std::move(answer);
        return a;
    }
};

namespace detail {

inline std::string normalize_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true;  // trims leading whitespace
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_ws) out.push_back(' ');
            in_ws = true;
        } else {
            out.push_back(c);
            in_ws = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// Backslash-escapes brackets so bracketed fields stay unambiguous.
inline std::string escape_brackets(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '[' || c == ']' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

inline std::string unescape_brackets(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) ++i;
        out.push_back(s[i]);
    }
    return out;
}

}  // namespace detail

// Canonical string form of an action. Equal actions produce equal
// signatures; free-text arguments are whitespace-normalized and
// bracket-escaped, everything else is rendered verbatim.
inline std::string action_signature(const Action& a) {
    using detail::escape_brackets;
    using detail::normalize_whitespace;
    std::ostringstream os;
    os << to_string(a.kind);
    switch (a.kind) {
        case ActionKind::Click:
        case ActionKind::Hover:
            os << '[' << a.elem.value_or(-1) << ']';
            break;
        case ActionKind::Type:
            os << '[' << a.elem.value_or(-1) << ']'
               << '[' << escape_brackets(normalize_whitespace(a.text.value_or(""))) << ']'
               << '[' << (a.press_enter_after ? 1 : 0) << ']';
            break;
        case ActionKind::Press:
            os << '[' << escape_brackets(normalize_whitespace(a.key_comb.value_or(""))) << ']';
            break;
        case ActionKind::Goto:
            os << '[' << escape_brackets(normalize_whitespace(a.url.value_or(""))) << ']';
            break;
        case ActionKind::TabFocus:
            os << '[' << a.tab_index.value_or(-1) << ']';
            break;
        case ActionKind::Scroll:
            os << '[' << (a.direction == ScrollDirection::Up ? "up" : "down") << ']';
            break;
        case ActionKind::Stop:
            os << '[' << escape_brackets(normalize_whitespace(a.answer.value_or(""))) << ']';
            break;
        case ActionKind::GoBack:
        case ActionKind::GoForward:
        case ActionKind::NewTab:
        case ActionKind::TabClose:
            break;
    }
    return os.str();
}

inline bool operator==(const Action& lhs, const Action& rhs) {
    return action_signature(lhs) == action_signature(rhs);
}
inline bool operator!=(const Action& lhs, const Action& rhs) { return !(lhs == rhs); }

// ---------------------------------------------------------------------------
// Action parsing

namespace detail {

// Splits "kind [arg] [arg] ..." into the kind token and escape-aware
// bracketed arguments. Stops at the first character that cannot start
// another argument, so trailing prose is ignored.
struct ParsedActionText {
    std::string kind;
    std::vector<std::string> args;
};

inline ParsedActionText split_action_text(const std::string& text) {
    ParsedActionText out;
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    skip_ws();
    while (i < text.size()) {
        char c = text[i];
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            out.kind.push_back(c);
            ++i;
        } else {
            break;
        }
    }
    if (out.kind.empty()) throw MalformedAction("no action keyword found");
    for (;;) {
        skip_ws();
        if (i >= text.size() || text[i] != '[') break;
        ++i;  // consume '['
        std::string arg;
        bool closed = false;
        while (i < text.size()) {
            char c = text[i];
            if (c == '\\' && i + 1 < text.size()) {
                arg.push_back(text[i + 1]);
                i += 2;
                continue;
            }
            if (c == ']') {
                ++i;
                closed = true;
                break;
            }
            arg.push_back(c);
            ++i;
        }
        if (!closed) throw MalformedAction("unterminated bracket in action text");
        out.args.push_back(arg);
    }
    return out;
}

inline int parse_nonneg_int(const std::string& s, const char* what) {
    std::string t = normalize_whitespace(s);
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); }))
        throw MalformedAction(std::string(what) + " must be a nonnegative integer, got '" + s + "'");
    return std::stoi(t);
}

}  // namespace detail

// Parses the Table-1 grammar from raw action text like "click [1234]".
inline Action parse_action_text(const std::string& text) {
    using namespace detail;
    ParsedActionText p = split_action_text(text);
    auto kind = action_kind_from_string(p.kind);
    if (!kind) throw MalformedAction("unknown action kind '" + p.kind + "'");

    auto require_args = [&](std::size_t lo, std::size_t hi) {
        if (p.args.size() < lo || p.args.size() > hi)
            throw MalformedAction("wrong arity for '" + p.kind + "': got " +
                                  std::to_string(p.args.size()) + " argument(s)");
    };

    Action a;
    a.kind = *kind;
    switch (*kind) {
        case ActionKind::Click:
        case ActionKind::Hover:
            require_args(1, 1);
            a.elem = parse_nonneg_int(p.args[0], "element id");
            break;
        case ActionKind::Type: {
            require_args(2, 3);
            a.elem = parse_nonneg_int(p.args[0], "element id");
            a.text = normalize_whitespace(p.args[1]);
            if (p.args.size() == 3) {
                std::string flag = normalize_whitespace(p.args[2]);
                if (flag != "0" && flag != "1")
                    throw MalformedAction("press_enter_after flag must be 0 or 1, got '" + flag + "'");
                a.press_enter_after = flag == "1";
            }
            break;
        }
        case ActionKind::Press:
            require_args(1, 1);
            a.key_comb = normalize_whitespace(p.args[0]);
            break;
        case ActionKind::Goto:
            require_args(1, 1);
            a.url = normalize_whitespace(p.args[0]);
            break;
        case ActionKind::TabFocus:
            require_args(1, 1);
            a.tab_index = parse_nonneg_int(p.args[0], "tab index");
            break;
        case ActionKind::Scroll: {
            require_args(1, 1);
            std::string d = normalize_whitespace(p.args[0]);
            std::transform(d.begin(), d.end(), d.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (d == "up")
                a.direction = ScrollDirection::Up;
            else if (d == "down")
                a.direction = ScrollDirection::Down;
            else
                throw MalformedAction("scroll direction must be up or down, got '" + d + "'");
            break;
        }
        case ActionKind::Stop: {
            require_args(0, 1);
            if (!p.args.empty()) {
                std::string ans = normalize_whitespace(p.args[0]);
                if (!ans.empty()) a.answer = ans;
            }
            break;
        }
        case ActionKind::GoBack:
        case ActionKind::GoForward:
        case ActionKind::NewTab:
        case ActionKind::TabClose:
            require_args(0, 0);
            break;
    }
    return a;
}

inline constexpr const char* kSummaryPhrase = "In summary, the next action I will perform is";

// Extracts the action from an LLM completion: locates the final occurrence
// of the summary phrase and parses the grammar after it.
inline Action parse_action(const std::string& completion_text) {
    std::size_t pos = completion_text.rfind(kSummaryPhrase);
    if (pos == std::string::npos)
        throw MissingSummaryPhrase("completion does not contain the action summary phrase");
    std::string rest = completion_text.substr(pos + std::string(kSummaryPhrase).size());
    // tolerate "is: click [1]" and backtick-wrapped actions
    std::size_t start = rest.find_first_not_of(" \t\r\n:`");
    if (start == std::string::npos) throw MalformedAction("nothing follows the summary phrase");
    return parse_action_text(rest.substr(start));
}

// ---------------------------------------------------------------------------
// Observation

struct ElementRecord {
    std::optional<int> id;      // empty for static text
    std::string tag_type;       // button / link / textbox / StaticText / ...
    std::string text_content;
};

inline bool operator==(const ElementRecord& a, const ElementRecord& b) {
    return a.id == b.id && a.tag_type == b.tag_type && a.text_content == b.text_content;
}

struct Observation {
    std::string url;
    std::vector<ElementRecord> elements;
    std::vector<std::pair<int, std::string>> open_tabs;
    std::optional<Action> previous_action;
    std::optional<std::string> image_ref;  // opaque
};

// One element per line in the [id][tagType][text content] format; static
// text carries an empty id field and no quotes around its content.
inline std::string render_observation(const Observation& obs) {
    std::string out;
    for (std::size_t i = 0; i < obs.elements.size(); ++i) {
        const ElementRecord& e = obs.elements[i];
        if (i) out.push_back('\n');
        out.push_back('[');
        if (e.id) out += std::to_string(*e.id);
        out += "][";
        out += detail::escape_brackets(e.tag_type);
        out += "][";
        if (e.id) {
            out += "'" + detail::escape_brackets(e.text_content) + "'";
        } else {
            out += detail::escape_brackets(e.text_content);
        }
        out += "]";
    }
    return out;
}

// Inverse of render_observation for a single line; used by round-trip checks.
inline ElementRecord parse_element_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t i = 0;
    while (i < line.size() && fields.size() < 3) {
        if (line[i] != '[') throw std::runtime_error("element line must start fields with '['");
        ++i;
        std::string f;
        bool closed = false;
        while (i < line.size()) {
            if (line[i] == '\\' && i + 1 < line.size()) {
                f.push_back('\\');
                f.push_back(line[i + 1]);
                i += 2;
                continue;
            }
            if (line[i] == ']') {
                ++i;
                closed = true;
                break;
            }
            f.push_back(line[i]);
            ++i;
        }
        if (!closed) throw std::runtime_error("unterminated field in element line");
        fields.push_back(f);
    }
    if (fields.size() != 3) throw std::runtime_error("element line needs three bracketed fields");
    ElementRecord e;
    if (!fields[0].empty()) e.id = detail::parse_nonneg_int(fields[0], "element id");
    e.tag_type = detail::unescape_brackets(fields[1]);
    std::string text = fields[2];
    if (e.id && text.size() >= 2 && text.front() == '\'' && text.back() == '\'')
        text = text.substr(1, text.size() - 2);
    e.text_content = detail::unescape_brackets(text);
    return e;
}

// ---------------------------------------------------------------------------
// Tasks and trajectories

struct TaskInstance {
    std::string id;
    std::string instruction;
    std::vector<std::string> instruction_image_refs;
    std::string start_page;
    int max_steps = 10;
    std::string goal_id;  // resolves to a GoalSpec in the loaded site graph
    std::string difficulty = "medium";
};

struct StateChange {
    std::string description;
    int step_index = 1;  // 1-based position within the simulated trajectory
    Action producing_action;
};

// Candidate action plus the imagined rollout behind it: H alternating
// predicted state changes and imagined follow-up actions.
struct SimulatedTrajectory {
    std::string root_digest;  // digest of the observation the rollout starts from
    Action candidate;
    std::vector<std::pair<StateChange, std::optional<Action>>> steps;
    int horizon = 1;

    void validate() const {
        if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
        if (static_cast<int>(steps.size()) > horizon)
            throw std::invalid_argument("more state changes than the horizon allows");
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (steps[i].first.description.empty())
                throw std::invalid_argument("state change description must be non-empty");
            if (i + 1 < steps.size() && !steps[i].second)
                throw std::invalid_argument("only the last step may omit the imagined action");
        }
        if (!steps.empty() && steps.front().first.producing_action != candidate)
            throw std::invalid_argument("first simulated action must equal the candidate");
    }
};

struct ScoredTrajectory {
    SimulatedTrajectory trajectory;
    std::vector<double> samples;  // each in {0, 0.5, 1.0}
    double aggregate = 0.0;       // arithmetic mean of samples

    void validate() const {
        if (samples.empty()) throw std::invalid_argument("scored trajectory needs >= 1 sample");
        double sum = 0;
        for (double s : samples) sum += s;
        if (std::abs(aggregate - sum / static_cast<double>(samples.size())) > 1e-12)
            throw std::invalid_argument("aggregate must equal the mean of the samples");
    }
};

inline std::string observation_digest(const Observation& obs) {
    // FNV-1a over the rendered observation plus URL; stable across platforms.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    mix(obs.url);
    mix("\n");
    mix(render_observation(obs));
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace wd::core
