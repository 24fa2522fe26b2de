#ifndef ZORO_SIMULATOR_HPP
#define ZORO_SIMULATOR_HPP

#include "zoro/scenarios.hpp"
#include "zoro/zoro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace zoro {

// ---------------------------------------------------------------------------
// Process noise
// ---------------------------------------------------------------------------

struct NoiseConfig {
    Matrix covariance;
    std::uint64_t seed = 0;

    void validate(Index nx) const
    {
        if (covariance.rows() != nx || covariance.cols() != nx) {
            throw ConfigError("noise: covariance must be " + std::to_string(nx) + "x" + std::to_string(nx));
        }
        const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
        if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw ConfigError("noise: covariance is not symmetric");
        }
        if (nx > 0 && Eigen::SelfAdjointEigenSolver<Matrix>(covariance).eigenvalues().minCoeff() < -1e-12 * scale) {
            throw ConfigError("noise: covariance is not positive semidefinite");
        }
    }
};

inline std::uint64_t splitmix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Zero-mean Gaussian vectors with a given covariance. Draw number i depends only on
/// (seed, i), so any sample can be regenerated without replaying the sequence.
class GaussianSampler {
public:
    GaussianSampler(const NoiseConfig& cfg) : seed_(cfg.seed)
    {
        cfg.validate(cfg.covariance.rows());
        const Index n = cfg.covariance.rows();
        // LDL' with pivoting also handles singular (semidefinite) covariances
        const Eigen::LDLT<Matrix> ldlt(cfg.covariance);
        const Vector d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
        Matrix L = ldlt.matrixL();
        factor_ = ldlt.transpositionsP().transpose() * (L * d.asDiagonal());
        (void)n;
    }

    Index dim() const { return factor_.rows(); }
    const Matrix& factor() const { return factor_; }

    double standard_normal(std::uint64_t counter) const
    {
        const std::uint64_t base = splitmix64(seed_ ^ splitmix64(counter));
        const double u1 = to_unit(splitmix64(base));
        const double u2 = to_unit(splitmix64(base + 1));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    Vector sample(std::uint64_t index) const
    {
        const Index n = dim();
        Vector z(n);
        for (Index i = 0; i < n; ++i) z[i] = standard_normal(index * static_cast<std::uint64_t>(n) + i);
        return factor_ * z;
    }

private:
    // (0, 1], never zero so that log() stays finite
    static double to_unit(std::uint64_t v) { return (double(v >> 11) + 1.0) * 0x1.0p-53; }

    std::uint64_t seed_;
    Matrix factor_;
};

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

enum class ControllerKind { NominalRti, ZoroRti, ZoroSqp };
enum class PropagationPhase { Preparation, Feedback };

inline std::string to_string(ControllerKind c)
{
    switch (c) {
    case ControllerKind::NominalRti: return "nominal_rti";
    case ControllerKind::ZoroRti: return "zoro_rti";
    case ControllerKind::ZoroSqp: return "zoro_sqp";
    }
    return "unknown";
}

inline ControllerKind controller_from_string(const std::string& s)
{
    if (s == "nominal_rti") return ControllerKind::NominalRti;
    if (s == "zoro_rti") return ControllerKind::ZoroRti;
    if (s == "zoro_sqp") return ControllerKind::ZoroSqp;
    throw ConfigError("unknown controller '" + s + "' (expected nominal_rti, zoro_rti or zoro_sqp)");
}

inline std::string to_string(PropagationPhase p)
{
    return p == PropagationPhase::Preparation ? "preparation" : "feedback";
}

/// Plant, controller model and geometry of one closed-loop experiment.
struct ClosedLoopProblem {
    std::string name;
    OcpPtr ocp;
    ModelPtr plant;
    Vector x0;
    ZoroConfig zoro;
    /// Moves the solver's references to the horizon starting at time t; may be empty.
    std::function<void(SqpSolver&, double t)> reference;
    std::vector<Obstacle> obstacles;
    double robot_radius = 0.0;
    int ix = 0, iy = 1; ///< position components used for the clearance
};

inline ClosedLoopProblem diff_drive_problem(const DiffDriveScenario& sc)
{
    ClosedLoopProblem p;
    p.name = "diff_drive";
    p.ocp = std::make_shared<const OcpSpec>(build_diff_drive_ocp(sc));
    p.plant = p.ocp->model;
    p.x0 = sc.x0;
    p.zoro = diff_drive_zoro_config(sc);
    p.reference = [sc](SqpSolver& s, double t) {
        const Reference ref = diff_drive_reference(sc, t);
        for (int k = 0; k < sc.N; ++k) s.set_reference(k, ref.stage[static_cast<std::size_t>(k)]);
        s.set_terminal_reference(ref.terminal);
    };
    p.obstacles = sc.obstacles;
    p.robot_radius = sc.robot_radius;
    p.ix = DiffDriveModel::kPx;
    p.iy = DiffDriveModel::kPy;
    return p;
}

struct ClosedLoopSettings {
    ControllerKind controller = ControllerKind::ZoroRti;
    PropagationPhase phase = PropagationPhase::Preparation;
    int n_steps = 120;
    int timing_repeats = 1; ///< run the identical simulation this often, keep per-step minimum timings
    SqpSettings sqp{};
    int plant_substeps = 1; ///< RK4 steps per sample

    void validate() const
    {
        if (n_steps < 1) throw ConfigError("closed loop: n_steps must be >= 1");
        if (timing_repeats < 1) throw ConfigError("closed loop: timing_repeats must be >= 1");
        if (plant_substeps < 1) throw ConfigError("closed loop: plant_substeps must be >= 1");
        sqp.validate();
    }
};

struct StepTimings {
    std::int64_t prepare_ns = 0;
    std::int64_t propagation_ns = 0;
    std::int64_t feedback_ns = 0;
    std::int64_t qp_ns = 0;
    std::int64_t total_ns = 0; ///< wall time of the whole controller call

    void take_min(const StepTimings& o)
    {
        prepare_ns = std::min(prepare_ns, o.prepare_ns);
        propagation_ns = std::min(propagation_ns, o.propagation_ns);
        feedback_ns = std::min(feedback_ns, o.feedback_ns);
        qp_ns = std::min(qp_ns, o.qp_ns);
        total_ns = std::min(total_ns, o.total_ns);
    }
};

struct StepRecord {
    int step = 0;
    double t = 0.0;
    Vector x;          ///< true state at the start of the sample (= xbar_0)
    Vector u;          ///< applied control
    Vector x_pred;     ///< predicted next state of the plan
    Vector clearance;  ///< |p - q| - r - r_obs per obstacle
    double margin = 0.0; ///< min over tightened node-1 rows of bound - h (plan, after feedback)
    StepTimings timings;
};

struct ClosedLoopTrace {
    std::string problem;
    ControllerKind controller = ControllerKind::ZoroRti;
    PropagationPhase phase = PropagationPhase::Preparation;
    std::uint64_t seed = 0;
    double sample_time = 0.0;
    int nx = 0, nu = 0;
    int timing_repeats = 1;
    std::vector<StepRecord> steps;
    Vector final_state;
    Vector final_clearance;
    bool failed = false;
    int failure_step = -1;
    std::string failure;
};

inline Vector obstacle_clearance(const ClosedLoopProblem& p, const Vector& x)
{
    Vector c(static_cast<Index>(p.obstacles.size()));
    for (std::size_t i = 0; i < p.obstacles.size(); ++i) {
        const Obstacle& o = p.obstacles[i];
        c[static_cast<Index>(i)] = std::hypot(x[p.ix] - o.qx, x[p.iy] - o.qy) - p.robot_radius - o.r;
    }
    return c;
}

namespace detail {

// One controller call; returns false when the QP could not be solved.
inline bool controller_step(SqpSolver& solver, const ClosedLoopProblem& p, const ClosedLoopSettings& s,
                            const Vector& xbar, StepTimings& tm, std::string& err)
{
    const Stopwatch total;
    tm = {};
    switch (s.controller) {
    case ControllerKind::NominalRti:
    case ControllerKind::ZoroRti: {
        const bool robust = s.controller == ControllerKind::ZoroRti;
        solver.prepare();
        tm.prepare_ns = solver.timings().prepare_ns;
        if (robust && s.phase == PropagationPhase::Preparation) {
            const Stopwatch sw;
            zoro_update(solver, p.zoro);
            tm.propagation_ns = sw.elapsed_ns();
        }
        // measurement arrives here
        if (robust && s.phase == PropagationPhase::Feedback) {
            const Stopwatch sw;
            zoro_update(solver, p.zoro);
            tm.propagation_ns = sw.elapsed_ns();
        }
        const FeedbackResult fr = solver.feedback(xbar);
        tm.feedback_ns = solver.timings().feedback_ns;
        tm.qp_ns = solver.timings().qp_ns;
        if (!fr.applied) {
            err = "QP " + to_string(fr.qp.status);
            tm.total_ns = total.elapsed_ns();
            return false;
        }
        break;
    }
    case ControllerKind::ZoroSqp: {
        const ZoroSqpResult r = zoro_sqp(solver, p.zoro, xbar);
        for (const auto& l : r.sqp.log) {
            tm.prepare_ns += l.timings.prepare_ns;
            tm.propagation_ns += l.timings.propagation_ns;
            // the final log entry stops before a feedback phase
            if (&l != &r.sqp.log.back() || r.sqp.status == SqpStatus::QpFailure) {
                tm.feedback_ns += l.timings.feedback_ns;
                tm.qp_ns += l.timings.qp_ns;
            }
        }
        if (r.sqp.status == SqpStatus::QpFailure || r.sqp.status == SqpStatus::TightenedInfeasible) {
            err = "SQP " + to_string(r.sqp.status);
            tm.total_ns = total.elapsed_ns();
            return false;
        }
        break;
    }
    }
    tm.total_ns = total.elapsed_ns();
    return true;
}

inline double tightened_margin(const SqpSolver& solver, const ZoroConfig& cfg)
{
    const OcpSpec& sp = solver.spec();
    const Iterate& it = solver.iterate();
    const int k = std::min(1, sp.N);
    const Vector u = k < sp.N ? it.u[k] : Vector::Zero(sp.nu());
    const ConstraintEval ce = eval_constraints(sp, k, it.x[k], u);
    double m = kInf;
    for (int i : cfg.tighten_idx(sp, k)) m = std::min(m, it.bound[k][i] - ce.values[i]);
    return m;
}

inline ClosedLoopTrace simulate_once(const ClosedLoopProblem& p, const NoiseConfig& noise,
                                     const ClosedLoopSettings& s)
{
    const OcpSpec& sp = *p.ocp;
    const double dt = sp.dt();
    ClosedLoopTrace tr;
    tr.problem = p.name;
    tr.controller = s.controller;
    tr.phase = s.phase;
    tr.seed = noise.seed;
    tr.sample_time = dt;
    tr.nx = sp.nx();
    tr.nu = sp.nu();
    tr.timing_repeats = s.timing_repeats;

    const GaussianSampler sampler(noise);
    const IntegratorConfig plant_cfg{IntegratorScheme::ERK4, dt, 1, false, s.plant_substeps};
    const ZoroConfig nominal_cfg = ZoroConfig::zero(sp.nx(), sp.nu());
    const ZoroConfig& init_cfg = s.controller == ControllerKind::NominalRti ? nominal_cfg : p.zoro;

    SqpSolver solver(p.ocp, s.sqp);
    solver.set_iterate(Iterate::constant(sp, p.x0, Vector::Zero(sp.nu())));
    if (p.reference) p.reference(solver, 0.0);

    // converged start
    const ZoroSqpResult init = zoro_sqp(solver, init_cfg, p.x0);
    Vector x = p.x0;
    if (init.sqp.status == SqpStatus::QpFailure || init.sqp.status == SqpStatus::TightenedInfeasible) {
        tr.failed = true;
        tr.failure_step = 0;
        tr.failure = "initial solve: " + to_string(init.sqp.status);
        tr.final_state = x;
        tr.final_clearance = obstacle_clearance(p, x);
        return tr;
    }

    for (int i = 0; i < s.n_steps; ++i) {
        const double t = i * dt;
        if (i > 0 && p.reference) p.reference(solver, t);
        StepRecord rec;
        rec.step = i;
        rec.t = t;
        rec.x = x;
        rec.clearance = obstacle_clearance(p, x);
        std::string err;
        if (!controller_step(solver, p, s, x, rec.timings, err)) {
            tr.failed = true;
            tr.failure_step = i;
            tr.failure = "step " + std::to_string(i) + ": " + err;
            break;
        }
        rec.u = solver.iterate().u[0];
        rec.x_pred = solver.iterate().x[1];
        rec.margin = s.controller == ControllerKind::NominalRti ? tightened_margin(solver, nominal_cfg)
                                                                 : tightened_margin(solver, p.zoro);
        tr.steps.push_back(rec);

        Vector x_next = integrate(*p.plant, x, rec.u, plant_cfg).x_next;
        x_next += sampler.sample(static_cast<std::uint64_t>(i));
        x = std::move(x_next);
        solver.shift();
    }
    tr.final_state = x;
    tr.final_clearance = obstacle_clearance(p, x);
    return tr;
}

} // namespace detail

/// Receding-horizon simulation: measure, control, integrate the plant with RK4, add noise,
/// shift. With timing_repeats > 1 the identical run is repeated and each step keeps the
/// minimum of every timing counter.
inline ClosedLoopTrace simulate_closed_loop(const ClosedLoopProblem& p, const NoiseConfig& noise,
                                            const ClosedLoopSettings& s)
{
    if (!p.ocp || !p.plant) throw ConfigError("closed loop: problem incomplete");
    s.validate();
    noise.validate(p.ocp->nx());
    p.zoro.validate(*p.ocp);
    require_dim(p.x0.size(), p.ocp->nx(), "closed loop: x0");
    if (p.plant->nx() != p.ocp->nx() || p.plant->nu() != p.ocp->nu()) {
        throw ConfigError("closed loop: plant and controller model dimensions differ");
    }
    ClosedLoopTrace best = detail::simulate_once(p, noise, s);
    for (int r = 1; r < s.timing_repeats; ++r) {
        const ClosedLoopTrace again = detail::simulate_once(p, noise, s);
        for (std::size_t i = 0; i < std::min(best.steps.size(), again.steps.size()); ++i) {
            best.steps[i].timings.take_min(again.steps[i].timings);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Quantiles {
    double min = 0.0, median = 0.0, max = 0.0;
};

inline Quantiles quantiles(std::vector<double> v)
{
    Quantiles q;
    if (v.empty()) return q;
    std::sort(v.begin(), v.end());
    q.min = v.front();
    q.max = v.back();
    const std::size_t n = v.size();
    q.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    return q;
}

struct MetricsReport {
    int steps = 0;
    bool failed = false;
    double min_clearance = kInf;
    int collisions = 0;            ///< states with clearance <= 0
    int constraint_violations = 0; ///< (step, row) pairs breaching a nominal bound
    Quantiles prepare_ns, propagation_ns, feedback_ns, qp_ns, total_ns;
    Quantiles propagation_share; ///< propagation / (prepare + propagation + feedback)
};

/// Violation tolerance on the nominal bounds.
inline constexpr double kViolationTol = 1e-9;

inline MetricsReport metrics(const ClosedLoopTrace& tr, const OcpSpec* spec = nullptr)
{
    if (tr.steps.empty() && tr.final_state.size() == 0) throw ConfigError("metrics: empty trace");
    MetricsReport m;
    m.steps = static_cast<int>(tr.steps.size());
    m.failed = tr.failed;
    std::vector<double> pre, prop, fb, qp, tot, share;
    auto clear = [&](const Vector& c) {
        if (c.size() == 0) return;
        m.min_clearance = std::min(m.min_clearance, c.minCoeff());
        if (c.minCoeff() <= 0.0) ++m.collisions;
    };
    for (const StepRecord& s : tr.steps) {
        clear(s.clearance);
        pre.push_back(double(s.timings.prepare_ns));
        prop.push_back(double(s.timings.propagation_ns));
        fb.push_back(double(s.timings.feedback_ns));
        qp.push_back(double(s.timings.qp_ns));
        tot.push_back(double(s.timings.total_ns));
        const double sum = double(s.timings.prepare_ns + s.timings.propagation_ns + s.timings.feedback_ns);
        share.push_back(sum > 0.0 ? double(s.timings.propagation_ns) / sum : 0.0);
        if (spec) {
            const ConstraintEval ce = eval_constraints(*spec, 0, s.x, s.u);
            for (Index i = 0; i < ce.values.size(); ++i) m.constraint_violations += ce.values[i] > kViolationTol;
        }
    }
    clear(tr.final_clearance);
    m.prepare_ns = quantiles(pre);
    m.propagation_ns = quantiles(prop);
    m.feedback_ns = quantiles(fb);
    m.qp_ns = quantiles(qp);
    m.total_ns = quantiles(tot);
    m.propagation_share = quantiles(share);
    return m;
}

} // namespace zoro

#endif // ZORO_SIMULATOR_HPP
