#ifndef ZORO_EXPERIMENTS_HPP
#define ZORO_EXPERIMENTS_HPP

#include "zoro/config.hpp"
#include "zoro/feasibility_check.hpp"
#include "zoro/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <thread>

namespace zoro {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Single open-loop solve
// ---------------------------------------------------------------------------

struct SolveOutcome {
    ZoroSqpResult result;
    std::vector<std::int64_t> wall_ns; ///< one entry per repeat
    bool ok = false;                    ///< converged
};

inline bool robust_solve(const RunConfig& c) { return c.controller.empty() || c.controller == "zoro_sqp"; }

/// Solves the configured OCP from the constant guess (x0, 0) and writes trajectory.csv,
/// tube.csv and solver_log.json into `out`. With repeats > 1 the identical solve is rerun
/// and every wall time is logged.
inline SolveOutcome run_solve(const RunConfig& c, const fs::path& out)
{
    if (!robust_solve(c) && c.controller != "sqp") {
        throw ConfigError("solve: controller must be zoro_sqp or sqp, got '" + c.controller + "'");
    }
    const OcpPtr spec = c.ocp();
    const ZoroConfig cfg = robust_solve(c) ? c.zoro : ZoroConfig::zero(spec->nx(), spec->nu());
    const Iterate guess = Iterate::constant(*spec, c.x0(), Vector::Zero(spec->nu()));
    SolveOutcome o;
    for (int r = 0; r < c.repeats; ++r) {
        const Stopwatch sw;
        ZoroSqpResult res = zoro_sqp(spec, cfg, guess, c.sqp);
        o.wall_ns.push_back(sw.elapsed_ns());
        if (r == 0) o.result = std::move(res);
    }
    const SqpResult& s = o.result.sqp;
    o.ok = s.status == SqpStatus::Converged;
    write_csv(out / "trajectory.csv", trajectory_table(*spec, s.iterate.x, s.iterate.u));
    if (o.result.tube.P.size() == std::size_t(spec->N + 1)) write_csv(out / "tube.csv", tube_table(*spec, o.result.tube));
    nlohmann::json log = solver_log_json(s, robust_solve(c) ? "zoro_sqp" : "sqp");
    log["model"] = c.model;
    log["nx"] = spec->nx();
    log["nu"] = spec->nu();
    log["N"] = spec->N;
    log["wall_ns"] = o.wall_ns;
    log["wall_ns_min"] = *std::min_element(o.wall_ns.begin(), o.wall_ns.end());
    write_json(out / "solver_log.json", log);
    return o;
}

// ---------------------------------------------------------------------------
// Independent feasibility check of solve outputs
// ---------------------------------------------------------------------------

/// Reads `dir`/trajectory.csv and checks it against the configured robust criteria.
inline FeasibilityReport run_check(const RunConfig& c, const fs::path& dir, double tol = 1e-6)
{
    const OcpPtr spec = c.ocp();
    const Trajectory traj = trajectory_from_table(read_csv(dir / "trajectory.csv"), *spec);
    return check_feasibility(*spec, c.zoro, traj, tol);
}

// ---------------------------------------------------------------------------
// Seeded closed-loop runs
// ---------------------------------------------------------------------------

struct ClosedLoopRun {
    ClosedLoopTrace trace;
    MetricsReport metrics;
};

struct ClosedLoopSummary {
    std::vector<ClosedLoopRun> runs; ///< ordered by seed
    int failures = 0;
    int collisions = 0;       ///< summed over runs
    int colliding_runs = 0;
    double min_clearance = kInf;
    Quantiles propagation_share; ///< over all steps of all runs
    Quantiles total_ns;
    std::int64_t wall_ns = 0;
};

/// Runs seeds seed0 .. seed0 + n_runs - 1 on up to `workers` threads (one solver per run).
/// Traces are written afterwards from the calling thread when `out` is non-empty.
inline ClosedLoopSummary run_closed_loop(const RunConfig& c, int n_runs, unsigned workers, const fs::path& out = {})
{
    ClosedLoopSettings s = c.closed_loop;
    s.controller = c.controller.empty() ? ControllerKind::ZoroRti : controller_from_string(c.controller);
    const ClosedLoopProblem p = c.problem();
    ClosedLoopSummary sum;
    sum.runs.resize(static_cast<std::size_t>(n_runs));
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    const Stopwatch wall;
    auto worker = [&] {
        for (int i = next++; i < n_runs; i = next++) {
            try {
                NoiseConfig noise = c.noise;
                noise.seed = c.noise.seed + static_cast<std::uint64_t>(i);
                ClosedLoopRun& r = sum.runs[std::size_t(i)];
                r.trace = simulate_closed_loop(p, noise, s);
                r.metrics = metrics(r.trace, p.ocp.get());
            } catch (...) {
                const std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_runs)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
    sum.wall_ns = wall.elapsed_ns();

    std::vector<double> share, total;
    for (const ClosedLoopRun& r : sum.runs) {
        sum.failures += r.trace.failed;
        sum.collisions += r.metrics.collisions;
        sum.colliding_runs += r.metrics.collisions > 0;
        sum.min_clearance = std::min(sum.min_clearance, r.metrics.min_clearance);
        for (const StepRecord& st : r.trace.steps) {
            const auto& t = st.timings;
            const double d = double(t.prepare_ns + t.propagation_ns + t.feedback_ns);
            share.push_back(d > 0.0 ? double(t.propagation_ns) / d : 0.0);
            total.push_back(double(t.total_ns));
        }
    }
    sum.propagation_share = quantiles(share);
    sum.total_ns = quantiles(total);

    if (!out.empty()) {
        nlohmann::json runs = nlohmann::json::array();
        for (const ClosedLoopRun& r : sum.runs) {
            const std::string stem = "trace_seed" + std::to_string(r.trace.seed);
            write_csv(out / (stem + ".csv"), trace_table(r.trace));
            write_json(out / (stem + ".json"), trace_meta_json(r.trace, p, r.metrics));
            runs.push_back({{"seed", r.trace.seed},
                            {"trace", stem + ".csv"},
                            {"failed", r.trace.failed},
                            {"collisions", r.metrics.collisions},
                            {"min_clearance", r.metrics.min_clearance},
                            {"propagation_share_median", r.metrics.propagation_share.median}});
        }
        nlohmann::json j;
        j["controller"] = to_string(s.controller);
        j["propagation_phase"] = to_string(s.phase);
        j["n_steps"] = s.n_steps;
        j["timing_repeats"] = s.timing_repeats;
        j["runs"] = runs;
        j["failures"] = sum.failures;
        j["collisions"] = sum.collisions;
        j["colliding_runs"] = sum.colliding_runs;
        j["min_clearance"] = sum.min_clearance;
        j["propagation_share"] = quantiles_json(sum.propagation_share);
        j["total_ns"] = quantiles_json(sum.total_ns);
        write_json(out / "summary.json", j);
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Propagation-cost scaling on the hanging chain
// ---------------------------------------------------------------------------

struct ScalingPoint {
    int n_mass = 0;
    int nx = 0;
    bool ok = false;
    std::string status;
    int iterations_nominal = 0;
    int iterations_zoro = 0;
    double nominal_per_iter_ns = 0.0;
    double zoro_per_iter_ns = 0.0;
    double propagation_per_iter_ns = 0.0; ///< propagation + backoff
    double remainder_per_iter_ns = 0.0;   ///< zoRO iteration minus propagation
};

struct ScalingReport {
    std::vector<ScalingPoint> points;
    std::optional<double> slope; ///< log-log fit of propagation time against nx
    bool partial = false;
    std::string note;
};

/// Least-squares slope of log(y) against log(x); needs two distinct x.
inline std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() < 2 || x.size() != y.size()) return std::nullopt;
    double mx = 0, my = 0;
    const double n = double(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    if (sxx <= 0.0) return std::nullopt;
    return sxy / sxx;
}

/// Per n_mass: the nominal SQP and zoRO-SQP are solved from the same guess; per-iteration
/// times are wall time / iterations, minimized over `repeats` identical solves.
inline ScalingReport run_scaling(const RunConfig& c, int repeats, const fs::path& out = {})
{
    ScalingReport rep;
    for (int n : c.scaling.n_mass) {
        ScalingPoint pt;
        pt.n_mass = n;
        try {
            ChainScenario sc = c.chain;
            sc.n_mass = n;
            sc.integrator = c.chain.integrator;
            const OcpPtr spec = std::make_shared<const OcpSpec>(build_chain_ocp(sc));
            pt.nx = spec->nx();
            ZoroConfig zc = chain_zoro_config(sc, c.scaling.velocity_noise);
            zc.gamma = c.zoro.gamma;
            const Iterate guess = Iterate::constant(*spec, chain_initial_state(sc), Vector::Zero(spec->nu()));
            const ZoroConfig zero = ZoroConfig::zero(spec->nx(), spec->nu());
            double nom = kInf, zor = kInf, prop = kInf;
            bool ok = true;
            std::string status;
            for (int r = 0; r < repeats; ++r) {
                SqpSolver a(spec, c.sqp);
                a.set_iterate(guess);
                Stopwatch sw;
                const SqpResult rn = a.solve(guess.x[0]);
                const double tn = double(sw.elapsed_ns());

                SqpSolver b(spec, c.sqp);
                b.set_iterate(guess);
                sw = Stopwatch();
                const ZoroSqpResult rz = zoro_sqp(b, zc, guess.x[0]);
                const double tz = double(sw.elapsed_ns());

                pt.iterations_nominal = rn.iterations;
                pt.iterations_zoro = rz.sqp.iterations;
                ok = rn.status == SqpStatus::Converged && rz.sqp.status == SqpStatus::Converged;
                status = "nominal " + to_string(rn.status) + ", zoro " + to_string(rz.sqp.status);
                if (!ok) break;
                double p = 0.0;
                for (const auto& l : rz.sqp.log) p += double(l.timings.propagation_ns);
                nom = std::min(nom, tn / std::max(1, rn.iterations));
                zor = std::min(zor, tz / std::max(1, rz.sqp.iterations));
                prop = std::min(prop, p / double(rz.sqp.log.size()));
            }
            pt.ok = ok;
            pt.status = status;
            if (ok) {
                pt.nominal_per_iter_ns = nom;
                pt.zoro_per_iter_ns = zor;
                pt.propagation_per_iter_ns = prop;
                pt.remainder_per_iter_ns = zor - prop;
            }
        } catch (const std::exception& e) {
            pt.ok = false;
            pt.status = e.what();
        }
        rep.partial = rep.partial || !pt.ok;
        rep.points.push_back(pt);
    }
    std::vector<double> xs, ys;
    for (const auto& p : rep.points) {
        if (p.ok && p.propagation_per_iter_ns > 0.0) {
            xs.push_back(p.nx);
            ys.push_back(p.propagation_per_iter_ns);
        }
    }
    rep.slope = loglog_slope(xs, ys);
    if (!rep.slope) rep.note = "insufficient points for a slope fit";
    if (rep.partial) rep.note += std::string(rep.note.empty() ? "" : "; ") + "some sizes failed to solve";

    if (!out.empty()) {
        CsvTable t;
        t.header = {"n_mass", "nx", "ok", "iterations_nominal", "iterations_zoro", "nominal_per_iter_ns",
                    "zoro_per_iter_ns", "propagation_per_iter_ns", "remainder_per_iter_ns"};
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : rep.points) {
            t.rows.push_back({double(p.n_mass), double(p.nx), double(p.ok), double(p.iterations_nominal),
                              double(p.iterations_zoro), p.nominal_per_iter_ns, p.zoro_per_iter_ns,
                              p.propagation_per_iter_ns, p.remainder_per_iter_ns});
            pts.push_back({{"n_mass", p.n_mass},
                           {"nx", p.nx},
                           {"ok", p.ok},
                           {"status", p.status},
                           {"iterations_nominal", p.iterations_nominal},
                           {"iterations_zoro", p.iterations_zoro},
                           {"nominal_per_iter_ns", p.nominal_per_iter_ns},
                           {"zoro_per_iter_ns", p.zoro_per_iter_ns},
                           {"propagation_per_iter_ns", p.propagation_per_iter_ns},
                           {"remainder_per_iter_ns", p.remainder_per_iter_ns}});
        }
        write_csv(out / "scaling.csv", t);
        nlohmann::json j;
        j["points"] = pts;
        j["slope"] = rep.slope ? nlohmann::json(*rep.slope) : nlohmann::json(nullptr);
        j["partial"] = rep.partial;
        j["note"] = rep.note;
        j["repeats"] = repeats;
        write_json(out / "scaling.json", j);
    }
    return rep;
}

} // namespace zoro

#endif // ZORO_EXPERIMENTS_HPP
