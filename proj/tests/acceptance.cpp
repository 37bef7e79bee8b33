// Acceptance gate: one pass/fail line per criterion, exit 0 only when all
// criteria hold. Everything runs offline against the bundled fixtures with
// oracle components.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "webdreamer/bench.hpp"
#include "webdreamer/judge.hpp"
#include "webdreamer/plan.hpp"
#include "webdreamer/propose.hpp"
#include "webdreamer/wm.hpp"

using namespace wd;
using core::Action;
using env::SiteGraph;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail = "") {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!pass) ++g_failures;
}

std::vector<SiteGraph> load_suite() {
    std::vector<SiteGraph> sites;
    for (const char* f : {"shop-small.json", "trap-site.json", "checkout-flow.json",
                          "wiki-maze.json"})
        sites.push_back(env::load_site(std::string(WD_FIXTURE_DIR) + "/" + f));
    return sites;
}

bool solvable(const SiteGraph& g, const core::TaskInstance& task) {
    env::EnvState start;
    start.page = task.start_page;
    start.bindings = g.variables;
    int d = env::oracle_distance(g, start, g.goals.at(task.goal_id));
    return d != env::kUnreachable && d + 1 <= task.max_steps;
}

plan::PlannerConfig base_config() {
    plan::PlannerConfig cfg;
    cfg.judge_samples = 3;
    cfg.k = 5;
    cfg.tree.branching = 5;
    cfg.tree.max_depth = 6;
    cfg.tree.expansion_budget = 60;
    return cfg;
}

std::vector<plan::RunRecord> run_all(const std::vector<bench::SuiteJob>& jobs,
                                     plan::AgentKind agent, const plan::PlannerConfig& cfg) {
    return bench::run_suite(jobs, agent, cfg, bench::oracle_components(), 4);
}

double mean_success(const std::vector<plan::RunRecord>& recs) {
    return bench::success_rate(recs);
}

// --------------------------------------------------------------------------

void criterion_1() {
    struct Case {
        double re, ts, wd, expected;
    };
    std::vector<Case> cases = {
        {19.4, 29.0, 26.5, 74.0}, {15.3, 20.5, 18.6, 63.5}, {16.8, 26.5, 22.6, 59.8},
        {28.8, 42.3, 37.4, 63.7}, {16.4, 22.2, 24.1, 132.8}, {10.7, 14.9, 12.7, 47.6},
    };
    bool pass = true;
    std::ostringstream detail;
    for (const Case& c : cases) {
        double got = bench::gamma(c.re, c.ts, c.wd);
        if (std::abs(got - c.expected) > 0.1) {
            pass = false;
            detail << " expected " << c.expected << " got " << got << ";";
        }
    }
    report(1, pass, "gamma reproduces all six published gap-closure values within 0.1pp",
           detail.str());
}

void criterion_2(const std::vector<SiteGraph>& sites, const std::vector<bench::SuiteJob>& jobs) {
    plan::PlannerConfig cfg = base_config();
    auto mpc = run_all(jobs, plan::AgentKind::Mpc, cfg);

    bool pass = true;
    std::ostringstream detail;
    int solvable_count = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!solvable(jobs[i].graph, jobs[i].task)) continue;
        ++solvable_count;
        if (mpc[i].reward != 1) {
            pass = false;
            detail << " mpc missed solvable task " << jobs[i].task.id << ";";
        }
    }
    if (solvable_count < 19) {
        pass = false;
        detail << " only " << solvable_count << " solvable tasks;";
    }

    std::vector<bench::SuiteJob> trap;
    for (const auto& j : jobs)
        if (j.graph.name == "trap-site") trap.push_back(j);
    auto reactive = run_all(trap, plan::AgentKind::Reactive, cfg);
    double sr_reactive = mean_success(reactive);
    if (!(sr_reactive < 1.0)) {
        pass = false;
        detail << " reactive solved the whole trap subset (sr=" << sr_reactive << ");";
    }
    std::ostringstream summary;
    summary << solvable_count << "/" << jobs.size()
            << " solvable tasks all solved by mpc; reactive trap-site sr=" << sr_reactive;
    report(2, pass, "oracle mpc solves every BFS-certified solvable task; reactive does not",
           pass ? summary.str() : detail.str());
}

void criterion_3(const std::vector<bench::SuiteJob>& jobs) {
    plan::PlannerConfig cfg = base_config();
    auto mpc = run_all(jobs, plan::AgentKind::Mpc, cfg);
    auto tree = run_all(jobs, plan::AgentKind::TreeSearch, cfg);
    double mpc_steps = 0, tree_steps = 0;
    for (const auto& r : mpc) mpc_steps += static_cast<double>(r.real_action_count);
    for (const auto& r : tree) tree_steps += static_cast<double>(r.real_action_count);
    mpc_steps /= static_cast<double>(mpc.size());
    tree_steps /= static_cast<double>(tree.size());
    std::ostringstream detail;
    detail << "tree_search mean " << tree_steps << " vs mpc mean " << mpc_steps;
    report(3, tree_steps >= 2.0 * mpc_steps,
           "tree search spends >= 2x the real actions of the mpc planner", detail.str());
}

void criterion_4(const std::vector<bench::SuiteJob>& jobs) {
    plan::PlannerConfig cfg = base_config();
    std::vector<double> fidelities = {1.0, 0.75, 0.5};
    std::vector<double> means;
    std::size_t n_per_point = 0;
    for (double f : fidelities) {
        std::vector<plan::RunRecord> all;
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            cfg.sim.fidelity = f;
            cfg.sim.seed = seed;
            auto recs = run_all(jobs, plan::AgentKind::Mpc, cfg);
            all.insert(all.end(), recs.begin(), recs.end());
        }
        n_per_point = all.size();
        means.push_back(mean_success(all));
    }
    // binomial noise bound at worst-case variance p=0.5
    double slack = 3.0 * std::sqrt(0.25 / static_cast<double>(n_per_point));
    bool pass = means[0] >= means[1] - slack && means[1] >= means[2] - slack;
    std::ostringstream detail;
    detail << "sr(1.0)=" << means[0] << " sr(0.75)=" << means[1] << " sr(0.5)=" << means[2]
           << " slack=" << slack;
    report(4, pass, "mean success is non-increasing as oracle fidelity degrades", detail.str());
}

void criterion_5(const std::vector<bench::SuiteJob>& jobs) {
    plan::PlannerConfig cfg = base_config();
    cfg.sim.fidelity = 0.85;
    auto sweep = [&](int horizon) {
        std::vector<plan::RunRecord> all;
        for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
            cfg.sim.horizon = horizon;
            cfg.sim.seed = seed;
            auto recs = run_all(jobs, plan::AgentKind::Mpc, cfg);
            all.insert(all.end(), recs.begin(), recs.end());
        }
        return mean_success(all);
    };
    double h1 = sweep(1);
    double h3 = sweep(3);
    std::ostringstream detail;
    detail << "sr(H=1)=" << h1 << " sr(H=3)=" << h3 << " at fidelity 0.85";
    report(5, h1 >= h3, "longer simulation horizons do not help under imperfect prediction",
           detail.str());
}

void criterion_6(const std::vector<bench::SuiteJob>& jobs) {
    std::vector<bench::SuiteJob> trap;
    for (const auto& j : jobs)
        if (j.graph.name == "trap-site") trap.push_back(j);

    plan::PlannerConfig cfg = base_config();
    double mpc = mean_success(run_all(trap, plan::AgentKind::Mpc, cfg));
    double rerank = mean_success(run_all(trap, plan::AgentKind::RerankOnly, cfg));
    double reactive = mean_success(run_all(trap, plan::AgentKind::Reactive, cfg));
    plan::PlannerConfig no_refine = cfg;
    no_refine.self_refine = false;
    double mpc_no_refine = mean_success(run_all(trap, plan::AgentKind::Mpc, no_refine));

    bool pass = mpc >= rerank && rerank >= reactive && mpc >= mpc_no_refine &&
                rerank > reactive && mpc > rerank;  // strict separation by construction
    std::ostringstream detail;
    detail << "mpc=" << mpc << " rerank_only=" << rerank << " reactive=" << reactive
           << " mpc(no refine)=" << mpc_no_refine;
    report(6, pass, "trap-site ablation ordering mpc >= rerank_only >= reactive holds",
           detail.str());
}

void criterion_7(const std::vector<SiteGraph>& sites) {
    bool pass = true;
    std::ostringstream detail;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " " << what << ";";
        }
    };

    // core round trip
    for (const std::string& sig :
         {std::string("click[12]"), std::string("type[3][red dress][0]"), std::string("stop[]"),
          std::string("scroll[down]"), std::string("go_back")})
        expect(core::action_signature(core::parse_action_text(sig)) == sig,
               "round trip " + sig);

    const SiteGraph& shop = sites[0];
    const core::TaskInstance& dress = *shop.find_task("find-red-dress");

    // env determinism and replay equivalence
    {
        env::Simulator sim(shop);
        sim.reset(dress);
        core::Observation direct;
        for (const Action& a : {Action::click(1), Action::click(11)})
            direct = sim.execute(a).observation;
        auto replayed = sim.replay({Action::click(1), Action::click(11)});
        expect(core::observation_digest(direct) == core::observation_digest(replayed),
               "replay equivalence");
    }

    // wm non-mutation + p^H truthfulness statistics
    {
        env::Simulator sim(shop);
        auto obs = sim.reset(dress);
        wm::OracleWorldModel model(shop);
        wm::SimConfig sc;
        sc.horizon = 2;
        sc.fidelity = 0.85;
        long before = sim.execute_count();
        const std::string truth1 =
            "The Women's Clothing category page opens, listing the Dresses section.";
        const std::string truth2 = "The Dresses listing appears, including a Red Dress.";
        int both = 0;
        const int n = 1500;
        for (int i = 0; i < n; ++i) {
            sc.seed = static_cast<std::uint64_t>(i) + 1;
            auto traj = model.simulate(obs, Action::click(1), sc, dress);
            if (traj.steps.size() == 2 && traj.steps[0].first.description == truth1 &&
                traj.steps[1].first.description == truth2)
                ++both;
        }
        expect(sim.execute_count() == before, "simulation mutated the environment");
        double p2 = 0.85 * 0.85;
        double observed = static_cast<double>(both) / n;
        double sigma = std::sqrt(p2 * (1 - p2) / n);
        expect(std::abs(observed - p2) <= 3 * sigma,
               "p^H statistic off: observed " + std::to_string(observed));
    }

    // judge mean bounds
    {
        judge::OracleJudge j(shop);
        env::EnvState s;
        s.page = "home";
        s.bindings = shop.variables;
        auto obs = env::observe_state(shop, s);
        core::SimulatedTrajectory traj;
        traj.candidate = Action::click(1);
        traj.steps.emplace_back(
            core::StateChange{
                "The Women's Clothing category page opens, listing the Dresses section.", 1,
                Action::click(1)},
            std::nullopt);
        auto scored = j.score_trajectory(dress, {}, obs, traj, 5);
        expect(scored.aggregate >= 0.0 && scored.aggregate <= 1.0, "judge mean out of bounds");
        for (double v : scored.samples)
            expect(v == 0.0 || v == 0.5 || v == 1.0, "judge sample off the three-scale rubric");
    }

    // propose subset / non-empty properties
    {
        std::vector<std::string> completions;
        for (int i = 0; i < 12; ++i)
            completions.push_back("In summary, the next action I will perform is click [" +
                                  std::to_string(i % 3) + "]");
        for (int k = 1; k <= 5; ++k) {
            auto ranked = propose::rank_candidates(completions, k);
            expect(!ranked.empty() && static_cast<int>(ranked.size()) <= k,
                   "rank_candidates size bound");
            std::set<std::string> seen;
            for (const Action& a : ranked) {
                expect(seen.insert(core::action_signature(a)).second, "duplicate candidate");
            }
        }
        auto idx = propose::parse_selected_indices("Selected actions: 1;0;1", 3);
        expect(idx.has_value() && *idx == std::vector<std::size_t>{0, 1},
               "selected-index parsing");
    }

    // plan argmax tie-breaking + scale invariance + repeat termination
    {
        expect(plan::choose_best({0.5, 0.5}) == 0, "argmax tie-break");
        expect(plan::choose_best({0.2, 0.4, 0.3}) == plan::choose_best({2.0, 4.0, 3.0}),
               "argmax scale invariance");
        plan::PlannerConfig cfg;
        std::vector<Action> h(4, Action::click(7));
        auto t = plan::termination_check(h, Action::click(7), 4, 10, cfg);
        expect(t.terminate && t.reason == "repeated_action", "repeat termination");
    }

    // bench golden report stability
    {
        std::vector<plan::RunRecord> recs;
        for (int i = 0; i < 2; ++i) {
            plan::RunRecord r;
            r.task_id = "t" + std::to_string(i);
            r.agent = "mpc";
            r.site = "alpha";
            r.difficulty = "medium";
            r.reward = 1;
            r.milestones_satisfied = 1.0;
            r.real_action_count = 4;
            r.wall_clock_seconds = 0.1;
            recs.push_back(r);
        }
        std::string a = bench::summarize(recs, "site");
        std::string b = bench::summarize({recs[1], recs[0]}, "site");
        expect(a == b, "report not a pure function of the record set");
        expect(a.find("alpha\tmpc\t2\t1.000\t1.000\t4.00\t0.100") != std::string::npos,
               "report row format drifted");
    }

    report(7, pass, "invariant battery (round trip, determinism, p^H, bounds, argmax, report)",
           detail.str());
}

void criterion_8() {
    bool pass = true;
    std::ostringstream detail;
    std::map<std::string, std::string> golden = {
        {"action_proposal.txt", "ca76f1e07c4edabe"},
        {"self_refinement.txt", "60682172d3af249a"},
        {"world_model.txt", "9d40832048033805"},
        {"reward_model.txt", "3a0da1eaf8a6a14a"},
    };
    for (const auto& [file, want] : golden) {
        std::ifstream in(std::string(WD_PROMPTS_DIR) + "/" + file);
        std::ostringstream body;
        body << in.rdbuf();
        std::ostringstream got;
        got << std::hex << llm::fnv1a(body.str());
        if (!in || got.str() != want) {
            pass = false;
            detail << " " << file << " digest " << got.str() << " != " << want << ";";
        }
    }
    for (llm::TemplateName name :
         {llm::TemplateName::ActionProposal, llm::TemplateName::SelfRefinement,
          llm::TemplateName::WorldModel, llm::TemplateName::RewardModel}) {
        try {
            llm::load_template(WD_PROMPTS_DIR, name);  // validates declared slots
        } catch (const std::exception& e) {
            pass = false;
            detail << " " << llm::template_file(name) << ": " << e.what() << ";";
        }
    }
    report(8, pass, "shipped prompt templates match their golden digests and declared slots",
           detail.str());
}

}  // namespace

int main() {
    try {
        std::vector<SiteGraph> sites = load_suite();
        auto jobs = bench::jobs_for_sites(sites);

        criterion_1();
        criterion_2(sites, jobs);
        criterion_3(jobs);
        criterion_4(jobs);
        criterion_5(jobs);
        criterion_6(jobs);
        criterion_7(sites);
        criterion_8();
    } catch (const std::exception& e) {
        std::cout << "[FAIL] acceptance harness aborted: " << e.what() << "\n";
        return 1;
    }
    if (g_failures) {
        std::cout << g_failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all 8 criteria passed\n";
    return 0;
}
