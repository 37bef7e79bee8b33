#pragma once

// Benchmark harness: metrics (success rate, completion rate, gap-closure
// gamma), record serialization, report tables, and a sharded suite runner.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "webdreamer/plan.hpp"

namespace wd::bench {

using json = nlohmann::json;
using plan::RunRecord;

struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& what) : std::runtime_error(what) {}
};
struct DegenerateGap : std::runtime_error {
    explicit DegenerateGap(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Metrics

inline double success_rate(const std::vector<RunRecord>& records) {
    if (records.empty()) throw EmptyInput("success_rate over zero records");
    double sum = 0;
    for (const auto& r : records) sum += r.reward;
    return sum / static_cast<double>(records.size());
}

inline double completion_rate(const std::vector<RunRecord>& records) {
    if (records.empty()) throw EmptyInput("completion_rate over zero records");
    double sum = 0;
    for (const auto& r : records) sum += r.milestones_satisfied;
    return sum / static_cast<double>(records.size());
}

// Gap closure between the reactive and tree-search agents, as a percentage
// rounded to one decimal. Unit-free in its inputs.
inline double gamma(double sr_reactive, double sr_tree, double sr_wd) {
    double denom = sr_tree - sr_reactive;
    if (denom == 0.0) throw DegenerateGap("tree-search and reactive success rates are equal");
    double value = 100.0 * (sr_wd - sr_reactive) / denom;
    return std::round(value * 10.0) / 10.0;
}

// ---------------------------------------------------------------------------
// Record serialization (line-delimited JSON)

inline json to_json(const plan::StepDecision& d) {
    json scored = json::array();
    for (const auto& s : d.scored) {
        json steps = json::array();
        for (const auto& [change, imagined] : s.trajectory.steps) {
            json step = {{"description", change.description},
                         {"action", core::action_signature(change.producing_action)}};
            if (imagined) step["imagined"] = core::action_signature(*imagined);
            steps.push_back(std::move(step));
        }
        scored.push_back({{"candidate", core::action_signature(s.trajectory.candidate)},
                          {"samples", s.samples},
                          {"aggregate", s.aggregate},
                          {"steps", std::move(steps)}});
    }
    json cands = json::array(), refined = json::array();
    for (const auto& a : d.candidates) cands.push_back(core::action_signature(a));
    for (const auto& a : d.refined) refined.push_back(core::action_signature(a));
    return {{"candidates", std::move(cands)},
            {"refined", std::move(refined)},
            {"scored", std::move(scored)},
            {"chosen", core::action_signature(d.chosen)},
            {"chosen_index", d.chosen_index},
            {"low_confidence", d.low_confidence}};
}

inline json to_json(const RunRecord& r) {
    json decisions = json::array();
    for (const auto& d : r.step_decisions) decisions.push_back(to_json(d));
    return {{"task_id", r.task_id},
            {"agent", r.agent},
            {"site", r.site},
            {"difficulty", r.difficulty},
            {"actions", r.actions},
            {"step_decisions", std::move(decisions)},
            {"reward", r.reward},
            {"milestones_satisfied", r.milestones_satisfied},
            {"real_action_count", r.real_action_count},
            {"simulated_trajectory_count", r.simulated_trajectory_count},
            {"irreversible_count", r.irreversible_count},
            {"wall_clock_seconds", r.wall_clock_seconds},
            {"seed", r.seed},
            {"config_digest", r.config_digest},
            {"outcome", r.outcome}};
}

// Reads back the metric-bearing fields; step decisions stay as audit data in
// the file and are not needed for any report.
inline RunRecord record_from_json(const json& j) {
    RunRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.agent = j.at("agent").get<std::string>();
    r.site = j.at("site").get<std::string>();
    r.difficulty = j.value("difficulty", "medium");
    r.actions = j.value("actions", std::vector<std::string>{});
    r.reward = j.at("reward").get<int>();
    r.milestones_satisfied = j.at("milestones_satisfied").get<double>();
    r.real_action_count = j.at("real_action_count").get<long>();
    r.simulated_trajectory_count = j.value("simulated_trajectory_count", 0L);
    r.irreversible_count = j.value("irreversible_count", 0);
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.config_digest = j.value("config_digest", "");
    r.outcome = j.value("outcome", "ok");
    return r;
}

inline void write_records(const std::string& path, const std::vector<RunRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write records file: " + path);
    for (const auto& r : records) out << to_json(r).dump() << "\n";
}

inline std::vector<RunRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read records file: " + path);
    std::vector<RunRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(record_from_json(json::parse(line)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

// Tab-delimited tables, a pure function of the record set: stable group
// ordering (lexicographic) and fixed number formatting.
inline std::string summarize(const std::vector<RunRecord>& records,
                             const std::string& group_by = "site") {
    if (records.empty()) throw EmptyInput("summarize over zero records");
    auto group_key = [&](const RunRecord& r) -> std::string {
        if (group_by == "agent") return r.agent;
        if (group_by == "difficulty") return r.difficulty;
        return r.site;
    };

    std::map<std::string, std::map<std::string, std::vector<RunRecord>>> grouped;
    for (const auto& r : records) grouped[group_key(r)][r.agent].push_back(r);

    std::ostringstream os;
    os << std::fixed;
    os << "== metrics by " << group_by << " ==\n";
    os << "group\tagent\tn\tsuccess_rate\tcompletion_rate\tmean_steps\tmean_wall_clock_s\n";
    for (const auto& [group, by_agent] : grouped) {
        for (const auto& [agent, recs] : by_agent) {
            double steps = 0, wall = 0;
            for (const auto& r : recs) {
                steps += static_cast<double>(r.real_action_count);
                wall += r.wall_clock_seconds;
            }
            os << group << '\t' << agent << '\t' << recs.size() << '\t' << std::setprecision(3)
               << success_rate(recs) << '\t' << completion_rate(recs) << '\t'
               << std::setprecision(2) << steps / static_cast<double>(recs.size()) << '\t'
               << std::setprecision(3) << wall / static_cast<double>(recs.size()) << "\n";
        }
    }

    // gamma only where all three reference agents are present
    bool header = false;
    for (const auto& [group, by_agent] : grouped) {
        if (!by_agent.count("reactive") || !by_agent.count("tree_search") ||
            !by_agent.count("mpc"))
            continue;
        double sr_re = success_rate(by_agent.at("reactive"));
        double sr_ts = success_rate(by_agent.at("tree_search"));
        double sr_wd = success_rate(by_agent.at("mpc"));
        if (sr_ts == sr_re) continue;
        if (!header) {
            os << "\n== gap closure ==\n";
            os << "group\treactive\ttree_search\tmpc\tgamma\n";
            header = true;
        }
        os << group << '\t' << std::setprecision(3) << sr_re << '\t' << sr_ts << '\t' << sr_wd
           << '\t' << std::setprecision(1) << gamma(sr_re, sr_ts, sr_wd) << "\n";
    }
    return os.str();
}

// Machine-readable counterpart of summarize().
inline json summary_json(const std::vector<RunRecord>& records,
                         const std::string& group_by = "site") {
    if (records.empty()) throw EmptyInput("summarize over zero records");
    auto group_key = [&](const RunRecord& r) -> std::string {
        if (group_by == "agent") return r.agent;
        if (group_by == "difficulty") return r.difficulty;
        return r.site;
    };
    std::map<std::string, std::map<std::string, std::vector<RunRecord>>> grouped;
    for (const auto& r : records) grouped[group_key(r)][r.agent].push_back(r);

    json out;
    out["group_by"] = group_by;
    out["groups"] = json::object();
    for (const auto& [group, by_agent] : grouped) {
        json agents = json::object();
        for (const auto& [agent, recs] : by_agent) {
            double steps = 0, wall = 0;
            for (const auto& r : recs) {
                steps += static_cast<double>(r.real_action_count);
                wall += r.wall_clock_seconds;
            }
            agents[agent] = {{"n", recs.size()},
                             {"success_rate", success_rate(recs)},
                             {"completion_rate", completion_rate(recs)},
                             {"mean_steps", steps / static_cast<double>(recs.size())},
                             {"mean_wall_clock_s", wall / static_cast<double>(recs.size())}};
        }
        if (by_agent.count("reactive") && by_agent.count("tree_search") &&
            by_agent.count("mpc")) {
            double sr_re = success_rate(by_agent.at("reactive"));
            double sr_ts = success_rate(by_agent.at("tree_search"));
            if (sr_ts != sr_re)
                agents["gamma"] = gamma(sr_re, sr_ts, success_rate(by_agent.at("mpc")));
        }
        out["groups"][group] = std::move(agents);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Suite runner

// Everything one worker needs; graph-backed components reference the
// worker's own simulator graph.
struct Components {
    std::unique_ptr<propose::Proposer> proposer;
    std::unique_ptr<wm::WorldModel> world;
    std::unique_ptr<judge::Judge> judge;
};

using ComponentFactory = std::function<Components(const env::SiteGraph&)>;

inline ComponentFactory oracle_components() {
    return [](const env::SiteGraph& g) {
        Components c;
        c.proposer = std::make_unique<propose::GraphProposer>(g);
        c.world = std::make_unique<wm::OracleWorldModel>(g);
        c.judge = std::make_unique<judge::OracleJudge>(g);
        return c;
    };
}

struct SuiteJob {
    env::SiteGraph graph;  // each worker copies this into its own simulator
    core::TaskInstance task;
};

// Shards episodes across a worker pool (one simulator per worker); output
// order matches job order regardless of scheduling.
inline std::vector<RunRecord> run_suite(const std::vector<SuiteJob>& jobs, plan::AgentKind agent,
                                        const plan::PlannerConfig& cfg,
                                        const ComponentFactory& factory, int workers = 4) {
    std::vector<RunRecord> records(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            env::Simulator sim(jobs[i].graph);
            Components c = factory(sim.graph());
            records[i] =
                plan::run_episode(agent, sim, jobs[i].task, cfg, *c.proposer, *c.world, *c.judge);
        }
    };
    int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    return records;
}

inline std::vector<SuiteJob> jobs_for_sites(const std::vector<env::SiteGraph>& sites,
                                            const std::vector<std::string>& task_filter = {}) {
    std::vector<SuiteJob> jobs;
    for (const auto& g : sites) {
        for (const auto& t : g.tasks) {
            if (!task_filter.empty() &&
                std::find(task_filter.begin(), task_filter.end(), t.id) == task_filter.end())
                continue;
            jobs.push_back({g, t});
        }
    }
    return jobs;
}

}  // namespace wd::bench
