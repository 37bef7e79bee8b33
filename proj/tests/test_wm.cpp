// Oracle world model: exactness at fidelity 1.0, trajectory shape, seeded
// reproducibility, the fidelity knob's statistics, and non-mutation of the
// real environment.

#include <catch2/catch_amalgamated.hpp>

#include "webdreamer/wm.hpp"

using namespace wd;
using core::Action;
using core::SimulatedTrajectory;
using env::SiteGraph;
using wm::OracleWorldModel;
using wm::SimConfig;

namespace {

SiteGraph shop() { return env::load_site(std::string(WD_FIXTURE_DIR) + "/shop-small.json"); }

core::Observation observe_page(const SiteGraph& g, const std::string& page) {
    env::EnvState s;
    s.page = page;
    s.bindings = g.variables;
    return env::observe_state(g, s);
}

const core::TaskInstance& task_of(const SiteGraph& g, const std::string& id) {
    const core::TaskInstance* t = g.find_task(id);
    REQUIRE(t != nullptr);
    return *t;
}

}  // namespace

TEST_CASE("config validation") {
    SimConfig cfg;
    cfg.horizon = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.horizon = 1;
    cfg.fidelity = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.fidelity = -0.1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.fidelity = 1.0;
    CHECK_NOTHROW(cfg.validate());
    CHECK(wm::state_repr_from_string("change_description") == wm::StateRepr::ChangeDescription);
    CHECK(wm::state_repr_from_string("full_html") == wm::StateRepr::FullHtml);
    CHECK(wm::state_repr_from_string("accessibility_tree") == wm::StateRepr::AccessibilityTree);
    CHECK_THROWS_AS(wm::state_repr_from_string("screenshot"), std::invalid_argument);
}

TEST_CASE("fidelity 1.0 predicts the canonical change for every wired (page, action) pair") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    SimConfig cfg;  // H=1, fidelity 1.0
    const auto& task = task_of(g, "find-red-dress");

    for (const auto& t : g.transitions) {
        core::Observation obs = observe_page(g, t.source_page);
        Action a = core::parse_action_text(t.action_pattern);
        SimulatedTrajectory traj = model.simulate(obs, a, cfg, task);
        REQUIRE(traj.steps.size() == 1);
        CHECK(traj.steps[0].first.description == t.canonical_change_description);
        CHECK(traj.steps[0].first.producing_action == a);
        CHECK_FALSE(traj.steps[0].second.has_value());  // H=1: nothing imagined
    }
}

TEST_CASE("H=1 trajectories have exactly one change and no imagined action") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    SimConfig cfg;
    auto traj = model.simulate(observe_page(g, "home"), Action::click(1), cfg,
                               task_of(g, "find-red-dress"));
    CHECK(traj.horizon == 1);
    CHECK(traj.steps.size() == 1);
    CHECK_FALSE(traj.steps[0].second.has_value());
    CHECK_NOTHROW(traj.validate());
}

TEST_CASE("H=2 alternates change, imagined action, change") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    SimConfig cfg;
    cfg.horizon = 2;
    auto traj = model.simulate(observe_page(g, "home"), Action::click(1), cfg,
                               task_of(g, "find-red-dress"));
    REQUIRE(traj.steps.size() == 2);
    REQUIRE(traj.steps[0].second.has_value());
    // after home -> clothing, the shortest path continues with click[11]
    CHECK(core::action_signature(*traj.steps[0].second) == "click[11]");
    CHECK(traj.steps[1].first.description == "The Dresses listing appears, including a Red Dress.");
    CHECK_NOTHROW(traj.validate());
}

TEST_CASE("imagining a stop halts the rollout early") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    SimConfig cfg;
    cfg.horizon = 5;
    // one step from dresses the goal page is reached, so the model imagines a
    // stop and the rollout ends after a single change despite horizon 5
    auto traj = model.simulate(observe_page(g, "dresses"), Action::click(21), cfg,
                               task_of(g, "find-red-dress"));
    REQUIRE(traj.steps.size() == 1);
    REQUIRE(traj.steps[0].second.has_value());
    CHECK(traj.steps[0].second->kind == core::ActionKind::Stop);
    CHECK(traj.steps[0].second->answer == "$19.99");
}

TEST_CASE("a stop candidate produces a single terminal description") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    SimConfig cfg;
    cfg.horizon = 3;
    auto traj = model.simulate(observe_page(g, "home"), Action::stop("$19.99"), cfg,
                               task_of(g, "find-red-dress"));
    REQUIRE(traj.steps.size() == 1);
    CHECK(traj.steps[0].first.description ==
          "The task ends here with the answer '$19.99'.");
}

TEST_CASE("simulation is reproducible for a fixed (seed, obs, candidate, salt)") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    SimConfig cfg;
    cfg.fidelity = 0.5;
    cfg.seed = 42;
    const auto& task = task_of(g, "find-red-dress");
    auto obs = observe_page(g, "home");
    auto t1 = model.simulate(obs, Action::click(1), cfg, task, /*salt=*/7);
    auto t2 = model.simulate(obs, Action::click(1), cfg, task, /*salt=*/7);
    REQUIRE(t1.steps.size() == t2.steps.size());
    for (std::size_t i = 0; i < t1.steps.size(); ++i)
        CHECK(t1.steps[i].first.description == t2.steps[i].first.description);
}

TEST_CASE("at fidelity 0 the reported change is a distractor, still reproducibly") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    SimConfig cfg;
    cfg.fidelity = 0.0;
    cfg.seed = 3;
    const auto& task = task_of(g, "find-red-dress");
    auto obs = observe_page(g, "home");
    auto t1 = model.simulate(obs, Action::click(1), cfg, task);
    auto t2 = model.simulate(obs, Action::click(1), cfg, task);
    const env::TransitionEffect* truth = env::find_transition(g, "home", "click[1]");
    REQUIRE(truth != nullptr);
    CHECK(t1.steps[0].first.description != truth->canonical_change_description);
    CHECK(t1.steps[0].first.description == t2.steps[0].first.description);
    // the distractor is a real transition of the same graph
    CHECK(env::find_transition_by_description(g, t1.steps[0].first.description) != nullptr);
}

TEST_CASE("unknown actions raise UnknownTransition at full fidelity on a bare graph") {
    // single-transition graph: no distractor exists to lie with either
    nlohmann::json doc = {
        {"site", "tiny"},
        {"pages",
         {{"a", {{"url", "http://a/"}, {"elements", {{{"id", 1}, {"tag", "link"}, {"text", "go"}}}}}},
          {"b", {{"url", "http://b/"}, {"elements", nlohmann::json::array()}}}}},
        {"transitions",
         {{{"page", "a"},
           {"action", "click[1]"},
           {"effect", {{"target", "b"}, {"change", "b opens"}}}}}},
        {"tasks",
         {{{"id", "t"},
           {"instruction", "reach b"},
           {"start_page", "a"},
           {"goal", {{"kind", "reach_page"}, {"target_page", "b"}}}}}}};
    SiteGraph g = env::site_from_json(doc);
    OracleWorldModel model(g);
    SimConfig cfg;
    auto obs = observe_page(g, "a");
    CHECK_THROWS_AS(model.simulate(obs, Action::click(999), cfg, task_of(g, "t")),
                    wm::UnknownTransition);
}

TEST_CASE("per-step truthfulness matches the fidelity parameter within 3 sigma") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    const double p = 0.85;
    SimConfig cfg;
    cfg.fidelity = p;
    const auto& task = task_of(g, "find-red-dress");
    const env::TransitionEffect* truth = env::find_transition(g, "home", "click[1]");
    auto obs = observe_page(g, "home");

    const int n = 2000;
    int truthful = 0;
    for (int i = 0; i < n; ++i) {
        cfg.seed = static_cast<std::uint64_t>(i) + 1;
        auto traj = model.simulate(obs, Action::click(1), cfg, task);
        if (traj.steps[0].first.description == truth->canonical_change_description) ++truthful;
    }
    double observed = static_cast<double>(truthful) / n;
    double sigma = std::sqrt(p * (1 - p) / n);
    INFO("observed " << observed << " expected " << p << " sigma " << sigma);
    CHECK(std::abs(observed - p) <= 3 * sigma);
}

TEST_CASE("simulation never mutates the real environment") {
    SiteGraph g = shop();
    env::Simulator sim(g);
    const auto& task = task_of(g, "find-red-dress");
    auto obs = sim.reset(task);
    auto before_digest = core::observation_digest(sim.observe());
    long before_count = sim.execute_count();

    OracleWorldModel model(sim.graph());
    SimConfig cfg;
    cfg.horizon = 3;
    for (int i = 0; i < 10; ++i) model.simulate(obs, Action::click(1), cfg, task, i);

    CHECK(sim.execute_count() == before_count);
    CHECK(core::observation_digest(sim.observe()) == before_digest);
    CHECK(sim.state().page == "home");
    CHECK(sim.state().history.empty());
}

TEST_CASE("full_html and accessibility_tree representations render the claimed page") {
    SiteGraph g = shop();
    OracleWorldModel model(g);
    const auto& task = task_of(g, "find-red-dress");
    auto obs = observe_page(g, "home");

    SimConfig cfg;
    cfg.state_representation = wm::StateRepr::FullHtml;
    auto html = model.simulate(obs, Action::click(1), cfg, task);
    CHECK(html.steps[0].first.description.rfind("HTML:\n", 0) == 0);
    CHECK(html.steps[0].first.description.find("<title>Clothing</title>") != std::string::npos);

    cfg.state_representation = wm::StateRepr::AccessibilityTree;
    auto ax = model.simulate(obs, Action::click(1), cfg, task);
    CHECK(ax.steps[0].first.description.rfind("AXTREE:\n", 0) == 0);
    CHECK(ax.steps[0].first.description.find("RootWebArea 'Clothing'") != std::string::npos);
}
