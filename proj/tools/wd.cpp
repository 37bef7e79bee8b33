// Command-line benchmark harness: run episodes, render reports, sweep a
// parameter, or run an ablation variant.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "webdreamer/bench.hpp"
#include "webdreamer/http_transport.hpp"
#include "webdreamer/judge.hpp"
#include "webdreamer/plan.hpp"
#include "webdreamer/propose.hpp"
#include "webdreamer/wm.hpp"

namespace fs = std::filesystem;
using namespace wd;

namespace {

struct RunOptions {
    std::string agent = "mpc";
    std::vector<std::string> sites;
    std::string tasks = "all";
    std::string wm_kind = "oracle";
    std::string judge_kind = "oracle";
    int horizon = 1;
    double fidelity = 1.0;
    std::uint64_t seed = 0;
    std::string mode = "replay";
    std::string transcript;
    std::string out_dir;
    int k = 5;
    int judge_samples = 3;
    bool no_refine = false;
    int workers = 4;
    std::string repr = "change_description";
    std::string prompts_dir = WD_PROMPTS_DIR;
};

std::vector<env::SiteGraph> load_sites(const std::vector<std::string>& paths) {
    std::vector<std::string> use = paths;
    if (use.empty())
        for (const char* f : {"shop-small.json", "trap-site.json", "checkout-flow.json",
                              "wiki-maze.json"})
            use.push_back(std::string(WD_FIXTURE_DIR) + "/" + f);
    std::vector<env::SiteGraph> sites;
    for (const auto& p : use) sites.push_back(env::load_site(p));
    return sites;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

plan::PlannerConfig make_config(const RunOptions& opt) {
    plan::PlannerConfig cfg;
    cfg.sim.horizon = opt.horizon;
    cfg.sim.fidelity = opt.fidelity;
    cfg.sim.seed = opt.seed;
    cfg.sim.state_representation = wm::state_repr_from_string(opt.repr);
    cfg.judge_samples = opt.judge_samples;
    cfg.k = opt.k;
    cfg.self_refine = !opt.no_refine;
    cfg.tree.branching = 5;
    cfg.tree.max_depth = 6;
    cfg.tree.expansion_budget = 60;
    cfg.validate();
    return cfg;
}

std::unique_ptr<llm::Gateway> make_gateway(const RunOptions& opt) {
    llm::GatewayConfig gc;
    gc.mode = llm::gateway_mode_from_string(opt.mode);
    gc.transcript_path = opt.transcript;
    llm::Transport transport;
    if (gc.mode != llm::GatewayMode::Replay) transport = llm::make_http_transport();
    return std::make_unique<llm::Gateway>(gc, transport);
}

// Factory wiring either oracle or LLM components; the gateway, when present,
// is shared across workers (it is internally synchronized).
bench::ComponentFactory make_factory(const RunOptions& opt, llm::Gateway* gateway) {
    if (opt.wm_kind == "oracle" && opt.judge_kind == "oracle") return bench::oracle_components();
    std::string prompts = opt.prompts_dir;
    std::string wm_kind = opt.wm_kind, judge_kind = opt.judge_kind;
    return [gateway, prompts, wm_kind, judge_kind](const env::SiteGraph& g) {
        bench::Components c;
        if (wm_kind == "oracle") {
            c.proposer = std::make_unique<propose::GraphProposer>(g);
            c.world = std::make_unique<wm::OracleWorldModel>(g);
        } else {
            c.proposer = std::make_unique<propose::LlmProposer>(*gateway, prompts);
            c.world = std::make_unique<wm::LlmWorldModel>(*gateway, prompts);
        }
        if (judge_kind == "oracle")
            c.judge = std::make_unique<judge::OracleJudge>(g);
        else
            c.judge = std::make_unique<judge::LlmJudge>(*gateway, prompts);
        return c;
    };
}

int do_run(const RunOptions& opt) {
    auto sites = load_sites(opt.sites);
    std::vector<std::string> filter;
    if (opt.tasks != "all") filter = split_csv(opt.tasks);
    auto jobs = bench::jobs_for_sites(sites, filter);
    if (jobs.empty()) {
        std::cerr << "no tasks matched\n";
        return 2;
    }

    plan::PlannerConfig cfg = make_config(opt);
    std::unique_ptr<llm::Gateway> gateway;
    if (opt.wm_kind == "llm" || opt.judge_kind == "llm") gateway = make_gateway(opt);
    auto factory = make_factory(opt, gateway.get());

    auto records = bench::run_suite(jobs, plan::agent_from_string(opt.agent), cfg, factory,
                                    opt.workers);

    std::string report = bench::summarize(records, "site");
    std::cout << report;

    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        bench::write_records((fs::path(opt.out_dir) / "records.jsonl").string(), records);
        std::ofstream rp(fs::path(opt.out_dir) / "report.txt");
        rp << report;
        nlohmann::json snapshot = {{"agent", opt.agent},
                                   {"wm", opt.wm_kind},
                                   {"judge", opt.judge_kind},
                                   {"horizon", opt.horizon},
                                   {"fidelity", opt.fidelity},
                                   {"seed", opt.seed},
                                   {"mode", opt.mode},
                                   {"k", opt.k},
                                   {"judge_samples", opt.judge_samples},
                                   {"self_refine", !opt.no_refine},
                                   {"repr", opt.repr},
                                   {"config_digest", plan::detail::config_digest(cfg)},
                                   {"episodes", records.size()}};
        std::ofstream cf(fs::path(opt.out_dir) / "config.json");
        cf << snapshot.dump(2) << "\n";
    }

    // exit 0 only when every episode completed (reward does not matter)
    for (const auto& r : records)
        if (r.outcome == "error") {
            std::cerr << "episode " << r.task_id << " errored\n";
            return 1;
        }
    return 0;
}

int do_report(const std::string& in, const std::string& group_by) {
    auto records = bench::read_records(in);
    std::cout << bench::summarize(records, group_by);
    return 0;
}

int do_sweep(const RunOptions& base, const std::string& param,
             const std::vector<double>& values) {
    auto sites = load_sites(base.sites);
    auto jobs = bench::jobs_for_sites(sites);
    std::cout << "param\tvalue\tsuccess_rate\n" << std::fixed << std::setprecision(3);
    for (double v : values) {
        RunOptions opt = base;
        if (param == "horizon")
            opt.horizon = static_cast<int>(v);
        else if (param == "fidelity")
            opt.fidelity = v;
        else {
            std::cerr << "unknown sweep parameter '" << param << "'\n";
            return 2;
        }
        auto records = bench::run_suite(jobs, plan::agent_from_string(opt.agent),
                                        make_config(opt), bench::oracle_components(),
                                        opt.workers);
        std::cout << param << '\t' << v << '\t' << bench::success_rate(records) << "\n";
    }
    return 0;
}

int do_ablate(const RunOptions& base, const std::string& variant) {
    auto sites = load_sites(base.sites);
    auto jobs = bench::jobs_for_sites(sites);
    plan::PlannerConfig cfg = make_config(base);

    auto baseline = bench::run_suite(jobs, plan::AgentKind::Mpc, cfg,
                                     bench::oracle_components(), base.workers);
    std::vector<plan::RunRecord> ablated;
    if (variant == "rerank_only") {
        ablated = bench::run_suite(jobs, plan::AgentKind::RerankOnly, cfg,
                                   bench::oracle_components(), base.workers);
    } else if (variant == "no_refine") {
        plan::PlannerConfig nr = cfg;
        nr.self_refine = false;
        ablated = bench::run_suite(jobs, plan::AgentKind::Mpc, nr, bench::oracle_components(),
                                   base.workers);
    } else {
        std::cerr << "unknown ablation variant '" << variant << "'\n";
        return 2;
    }
    std::cout << std::fixed << std::setprecision(3);
    std::cout << "variant\tsuccess_rate\n";
    std::cout << "mpc\t" << bench::success_rate(baseline) << "\n";
    std::cout << variant << '\t' << bench::success_rate(ablated) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"model-based planning benchmark harness for web agents"};
    app.require_subcommand(1);

    RunOptions opt;
    std::string report_in, group_by = "site";
    std::string sweep_param = "fidelity", ablate_variant = "rerank_only";
    std::vector<double> sweep_values;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--site", opt.sites, "site graph JSON path (repeatable)");
        cmd->add_option("--agent", opt.agent, "mpc|reactive|rerank_only|tree_search");
        cmd->add_option("--horizon", opt.horizon, "simulation horizon H");
        cmd->add_option("--fidelity", opt.fidelity, "oracle world-model fidelity in [0,1]");
        cmd->add_option("--seed", opt.seed, "RNG seed");
        cmd->add_option("--k", opt.k, "candidate count per step");
        cmd->add_option("--judge-samples", opt.judge_samples, "judge samples per trajectory");
        cmd->add_flag("--no-refine", opt.no_refine, "skip the self-refinement filter");
        cmd->add_option("--workers", opt.workers, "worker pool size");
        cmd->add_option("--repr", opt.repr,
                        "change_description|full_html|accessibility_tree");
    };

    CLI::App* run = app.add_subcommand("run", "run episodes and write records");
    add_common(run);
    run->add_option("--tasks", opt.tasks, "'all' or a comma-separated task-id list");
    run->add_option("--wm", opt.wm_kind, "oracle|llm world model");
    run->add_option("--judge", opt.judge_kind, "oracle|llm judge");
    run->add_option("--mode", opt.mode, "llm gateway mode: live|record|replay");
    run->add_option("--transcript", opt.transcript, "transcript JSONL path");
    run->add_option("--out", opt.out_dir, "output directory for records and report");
    run->add_option("--prompts", opt.prompts_dir, "prompt template directory");

    CLI::App* report = app.add_subcommand("report", "summarize a records file");
    report->add_option("--in", report_in, "records.jsonl path")->required();
    report->add_option("--group-by", group_by, "site|agent|difficulty");

    CLI::App* sweep = app.add_subcommand("sweep", "sweep one parameter (oracle components)");
    add_common(sweep);
    sweep->add_option("--param", sweep_param, "horizon|fidelity")->required();
    sweep->add_option("--values", sweep_values, "parameter values")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "compare an ablation against mpc");
    add_common(ablate);
    ablate->add_option("--variant", ablate_variant, "rerank_only|no_refine")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return do_run(opt);
        if (report->parsed()) return do_report(report_in, group_by);
        if (sweep->parsed()) return do_sweep(opt, sweep_param, sweep_values);
        if (ablate->parsed()) return do_ablate(opt, ablate_variant);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
