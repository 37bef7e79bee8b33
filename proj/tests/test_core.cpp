// Action grammar, observation rendering, and trajectory record invariants.

#include <catch2/catch_amalgamated.hpp>

#include "webdreamer/core.hpp"

using namespace wd::core;

TEST_CASE("parse_action_text handles the full grammar") {
    SECTION("click") {
        Action a = parse_action_text("click [1234]");
        CHECK(a.kind == ActionKind::Click);
        CHECK(a.elem == 1234);
        CHECK(action_signature(a) == "click[1234]");
    }
    SECTION("hover") {
        CHECK(action_signature(parse_action_text("hover [42]")) == "hover[42]");
    }
    SECTION("type with explicit no-enter flag") {
        Action a = parse_action_text("type [12] [red dress] [0]");
        CHECK(a.kind == ActionKind::Type);
        CHECK(a.elem == 12);
        CHECK(a.text == "red dress");
        CHECK_FALSE(a.press_enter_after);
        CHECK(action_signature(a) == "type[12][red dress][0]");
    }
    SECTION("type defaults to pressing enter") {
        Action a = parse_action_text("type [12] [red dress]");
        CHECK(a.press_enter_after);
        CHECK(action_signature(a) == "type[12][red dress][1]");
    }
    SECTION("press") {
        Action a = parse_action_text("press [Ctrl+v]");
        CHECK(a.key_comb == "Ctrl+v");
    }
    SECTION("scroll directions") {
        CHECK(parse_action_text("scroll [down]").direction == ScrollDirection::Down);
        CHECK(parse_action_text("scroll [UP]").direction == ScrollDirection::Up);
        CHECK_THROWS_AS(parse_action_text("scroll [left]"), MalformedAction);
    }
    SECTION("goto url") {
        Action a = parse_action_text("goto [http://example.com]");
        CHECK(a.url == "http://example.com");
    }
    SECTION("tab management") {
        CHECK(parse_action_text("new_tab").kind == ActionKind::NewTab);
        CHECK(parse_action_text("tab_focus [2]").tab_index == 2);
        CHECK(parse_action_text("tab_close").kind == ActionKind::TabClose);
        // both orderings of the compound verb are accepted
        CHECK(parse_action_text("close_tab").kind == ActionKind::TabClose);
        CHECK(parse_action_text("go_back").kind == ActionKind::GoBack);
        CHECK(parse_action_text("go_forward").kind == ActionKind::GoForward);
    }
    SECTION("stop with and without an answer") {
        Action a = parse_action_text("stop [$19.99]");
        CHECK(a.answer == "$19.99");
        Action b = parse_action_text("stop []");
        CHECK_FALSE(b.answer.has_value());
        Action c = parse_action_text("stop");
        CHECK_FALSE(c.answer.has_value());
        CHECK(action_signature(b) == "stop[]");
        CHECK(action_signature(c) == "stop[]");
    }
    SECTION("malformed input") {
        CHECK_THROWS_AS(parse_action_text("click [abc]"), MalformedAction);
        CHECK_THROWS_AS(parse_action_text("click"), MalformedAction);
        CHECK_THROWS_AS(parse_action_text("frobnicate [1]"), MalformedAction);
        CHECK_THROWS_AS(parse_action_text("click [1"), MalformedAction);
        CHECK_THROWS_AS(parse_action_text("type [1] [x] [7]"), MalformedAction);
        CHECK_THROWS_AS(parse_action_text(""), MalformedAction);
    }
}

TEST_CASE("parse_action requires the summary phrase and uses its last occurrence") {
    std::string completion =
        "Let's think step by step. The objective mentions a dress.\n"
        "In summary, the next action I will perform is click [11]\n"
        "Wait, reconsidering the layout.\n"
        "In summary, the next action I will perform is ```click [21]```";
    Action a = parse_action(completion);
    CHECK(action_signature(a) == "click[21]");

    CHECK_THROWS_AS(parse_action("I would click [21]"), MissingSummaryPhrase);
    CHECK_THROWS_AS(parse_action(std::string(kSummaryPhrase) + "   "), MalformedAction);
}

TEST_CASE("signature -> parse -> signature round trip over grammar-valid actions") {
    std::vector<Action> actions = {
        Action::click(0),
        Action::click(98765),
        Action::hover(3),
        Action::type_text(12, "red dress", true),
        Action::type_text(12, "red dress", false),
        Action::type_text(7, "query [with] brackets", true),
        Action::type_text(7, "back\\slash", true),
        Action::press("Ctrl+v"),
        Action::go_to("http://example.com/a?b=c"),
        Action::simple(ActionKind::GoBack),
        Action::simple(ActionKind::GoForward),
        Action::simple(ActionKind::NewTab),
        Action::simple(ActionKind::TabClose),
        Action::tab_focus(2),
        Action::scroll(ScrollDirection::Up),
        Action::scroll(ScrollDirection::Down),
        Action::stop(),
        Action::stop("$19.99"),
        Action::stop("answer [bracketed]"),
    };
    for (const Action& a : actions) {
        std::string sig = action_signature(a);
        INFO("signature: " << sig);
        Action back = parse_action_text(sig);
        CHECK(action_signature(back) == sig);
        CHECK(back == a);
    }
}

TEST_CASE("distinct actions have distinct signatures") {
    std::vector<Action> actions = {
        Action::click(1),    Action::click(2),
        Action::hover(1),    Action::type_text(1, "x", true),
        Action::type_text(1, "x", false),
        Action::type_text(1, "y", true),
        Action::stop(),      Action::stop("x"),
        Action::scroll(ScrollDirection::Up),
        Action::scroll(ScrollDirection::Down),
    };
    for (std::size_t i = 0; i < actions.size(); ++i)
        for (std::size_t j = i + 1; j < actions.size(); ++j)
            CHECK(action_signature(actions[i]) != action_signature(actions[j]));
}

TEST_CASE("free text in signatures is whitespace-normalized") {
    Action a = Action::type_text(4, "  red   dress \n", true);
    CHECK(action_signature(a) == "type[4][red dress][1]");
}

TEST_CASE("observation rendering uses the [id][tagType][text] line format") {
    Observation obs;
    obs.url = "http://x/";
    obs.elements = {{1234, "button", "Add to Cart"},
                    {std::nullopt, "StaticText", "Price: $19.99"}};
    std::string rendered = render_observation(obs);
    CHECK(rendered == "[1234][button]['Add to Cart']\n[][StaticText][Price: $19.99]");
}

TEST_CASE("element lines round-trip, including bracket escaping") {
    std::vector<ElementRecord> elems = {
        {1, "button", "Add to Cart"},
        {std::nullopt, "StaticText", "plain text"},
        {7, "link", "weird [bracketed] label"},
        {std::nullopt, "StaticText", "closing ] alone"},
    };
    for (const auto& e : elems) {
        Observation obs;
        obs.elements = {e};
        ElementRecord back = parse_element_line(render_observation(obs));
        CHECK(back == e);
    }
}

TEST_CASE("simulated trajectory validation") {
    SimulatedTrajectory t;
    t.candidate = Action::click(1);
    t.horizon = 2;
    t.steps.emplace_back(StateChange{"page opens", 1, Action::click(1)}, Action::click(2));
    t.steps.emplace_back(StateChange{"next page opens", 2, Action::click(2)}, std::nullopt);
    CHECK_NOTHROW(t.validate());

    SECTION("too many steps for the horizon") {
        t.horizon = 1;
        CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    }
    SECTION("first action must equal the candidate") {
        t.candidate = Action::click(9);
        CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    }
    SECTION("only the last step may omit the imagined action") {
        t.steps[0].second = std::nullopt;
        CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    }
    SECTION("empty description rejected") {
        t.steps[0].first.description = "";
        CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    }
}

TEST_CASE("scored trajectory aggregate must equal the sample mean") {
    ScoredTrajectory s;
    s.trajectory.candidate = Action::click(1);
    s.samples = {1.0, 0.5, 0.0};
    s.aggregate = 0.5;
    CHECK_NOTHROW(s.validate());
    s.aggregate = 0.6;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.samples.clear();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("observation digest is a pure function of url and rendered elements") {
    Observation a;
    a.url = "http://x/";
    a.elements = {{1, "link", "Home"}};
    Observation b = a;
    CHECK(observation_digest(a) == observation_digest(b));
    b.elements[0].text_content = "Away";
    CHECK(observation_digest(a) != observation_digest(b));
    b = a;
    b.url = "http://y/";
    CHECK(observation_digest(a) != observation_digest(b));
}
