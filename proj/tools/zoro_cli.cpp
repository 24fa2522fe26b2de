// zoro: run solves, closed-loop simulations and the scaling study from a JSON config.
//
// Exit codes: 0 success, 2 config error, 3 solver failure, 4 feasibility-check failure.

#include "zoro/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <thread>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCheck = 4;

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> repeats;
};

zoro::RunConfig load(const Options& o, std::optional<zoro::Experiment> exp)
{
    zoro::RunConfig c = o.config.empty() ? zoro::parse_config("{}", "<defaults>", exp)
                                         : zoro::load_config(o.config, exp);
    if (!o.out.empty()) c.out = o.out;
    if (o.seed) c.noise.seed = *o.seed;
    if (o.repeats) {
        if (*o.repeats < 1) throw zoro::ConfigError("--repeats must be >= 1");
        c.repeats = *o.repeats;
    }
    return c;
}

int cmd_solve(const Options& o)
{
    const zoro::RunConfig c = load(o, zoro::Experiment::Solve);
    const zoro::SolveOutcome r = zoro::run_solve(c, c.out);
    const auto& s = r.result.sqp;
    std::printf("solve: %s after %d iterations, wrote %s/{trajectory.csv,tube.csv,solver_log.json}\n",
                zoro::to_string(s.status).c_str(), s.iterations, c.out.c_str());
    return r.ok ? kExitOk : kExitSolver;
}

int cmd_check(const Options& o)
{
    const zoro::RunConfig c = load(o, std::nullopt);
    zoro::FeasibilityReport rep;
    try {
        rep = zoro::run_check(c, c.out);
    } catch (const zoro::IoError& e) {
        throw zoro::ConfigError(e.what());
    }
    for (const auto& v : rep.violations) {
        std::printf("violation: node %d row %d (%s) %s %.3e\n", v.node, v.row, v.label.c_str(),
                    zoro::to_string(v.kind).c_str(), v.value);
    }
    std::printf("check: max h+beta %.3e, max h (untightened) %.3e, max defect %.3e -> %s\n", rep.max_tightened,
                rep.max_nominal, rep.max_defect, rep.ok() ? "feasible" : "INFEASIBLE");
    return rep.ok() ? kExitOk : kExitCheck;
}

int cmd_closed_loop(const Options& o)
{
    const zoro::RunConfig c = load(o, zoro::Experiment::ClosedLoop);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const zoro::ClosedLoopSummary s = zoro::run_closed_loop(c, c.repeats, hw, c.out);
    std::printf("closed-loop: %d runs, %d failed, %d with collisions, min clearance %.4f, "
                "propagation share median %.1f%%, wall %.2f s\n",
                static_cast<int>(s.runs.size()), s.failures, s.colliding_runs, s.min_clearance,
                100.0 * s.propagation_share.median, 1e-9 * double(s.wall_ns));
    return s.failures == 0 ? kExitOk : kExitSolver;
}

int cmd_scaling(const Options& o)
{
    const zoro::RunConfig c = load(o, zoro::Experiment::Scaling);
    const zoro::ScalingReport r = zoro::run_scaling(c, c.repeats, c.out);
    for (const auto& p : r.points) {
        std::printf("n_mass %d (nx %d): %s; per iteration nominal %.3f ms, zoRO %.3f ms, propagation %.3f ms\n",
                    p.n_mass, p.nx, p.status.c_str(), 1e-6 * p.nominal_per_iter_ns, 1e-6 * p.zoro_per_iter_ns,
                    1e-6 * p.propagation_per_iter_ns);
    }
    if (r.slope) {
        std::printf("scaling: log-log slope of propagation time vs nx = %.3f\n", *r.slope);
    } else {
        std::printf("scaling: %s\n", r.note.c_str());
    }
    return r.partial ? kExitSolver : kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"zero-order robust MPC: solve, closed-loop, scaling, check"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output directory (overrides the config)");
        sub->add_option("--seed", o.seed, "noise seed (overrides the config)");
        sub->add_option("--repeats", o.repeats, "independent repetitions (closed-loop: seeded runs)");
    };
    CLI::App* solve = app.add_subcommand("solve", "open-loop zoRO solve; writes trajectory, tube and solver log");
    CLI::App* cl = app.add_subcommand("closed-loop", "seeded closed-loop simulations; writes traces and summary");
    CLI::App* scaling = app.add_subcommand("scaling", "propagation cost on the hanging chain for several sizes");
    CLI::App* check = app.add_subcommand("check", "independent feasibility check of solve outputs in --out");
    for (CLI::App* s : {solve, cl, scaling, check}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (solve->parsed()) return cmd_solve(o);
        if (cl->parsed()) return cmd_closed_loop(o);
        if (scaling->parsed()) return cmd_scaling(o);
        return cmd_check(o);
    } catch (const zoro::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const zoro::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kExitSolver;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return kExitSolver;
    }
}
