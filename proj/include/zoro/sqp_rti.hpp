#ifndef ZORO_SQP_RTI_HPP
#define ZORO_SQP_RTI_HPP

#include "zoro/integrator.hpp"
#include "zoro/ocp.hpp"
#include "zoro/qp_dense.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace zoro {

struct SqpSettings {
    int max_iter = 50;
    double tol_stationarity = 1e-6;
    double tol_equality = 1e-8;
    double tol_inequality = 1e-8;
    double tol_complementarity = 1e-6;
    double levenberg = 0.0; ///< added to the condensed Hessian diagonal
    QpSettings qp{};
    bool record_history = false;

    void validate() const
    {
        if (max_iter < 1) throw ConfigError("sqp: max_iter must be >= 1");
        if (!(tol_stationarity > 0 && tol_equality > 0 && tol_inequality > 0 && tol_complementarity > 0)) {
            throw ConfigError("sqp: tolerances must be > 0");
        }
        if (levenberg < 0.0) throw ConfigError("sqp: levenberg must be >= 0");
    }
};

/// Linearization of one shooting node, filled by the preparation phase.
struct NodeCache {
    Matrix A, B;   // k < N
    Vector x_next; // k < N, integrator output
    Vector h;      // constraint values
    Matrix dh;     // constraint gradients over [x; u]
    Matrix Q, S, R; // Gauss-Newton cost blocks (S: nu x nx)
    Vector q, r;    // cost gradient blocks
};

/// Primal-dual trajectory, cached linearization and current constraint bounds.
/// Rows are h_{k,i}(x_k, u_k) <= bound_{k,i}; the nominal bound is zero.
struct Iterate {
    std::vector<Vector> x;       // N + 1
    std::vector<Vector> u;       // N
    std::vector<Vector> lambda;  // N + 1, one entry per constraint row
    std::vector<Vector> bound_nominal;
    std::vector<Vector> bound;   // effective bounds (nominal minus backoff)
    std::vector<NodeCache> cache;

    int N() const { return static_cast<int>(u.size()); }

    static Iterate constant(const OcpSpec& spec, const Vector& x0, const Vector& u0)
    {
        Iterate it;
        it.x.assign(spec.N + 1, x0);
        it.u.assign(spec.N, u0);
        it.reset_constraints(spec);
        return it;
    }

    static Iterate zeros(const OcpSpec& spec)
    {
        return constant(spec, Vector::Zero(spec.nx()), Vector::Zero(spec.nu()));
    }

    void reset_constraints(const OcpSpec& spec)
    {
        lambda.clear();
        bound_nominal.clear();
        for (int k = 0; k <= spec.N; ++k) {
            lambda.push_back(Vector::Zero(spec.num_rows(k)));
            bound_nominal.push_back(Vector::Zero(spec.num_rows(k)));
        }
        bound = bound_nominal;
        cache.assign(spec.N + 1, NodeCache{});
    }

    void check(const OcpSpec& spec) const
    {
        if (static_cast<int>(x.size()) != spec.N + 1 || static_cast<int>(u.size()) != spec.N) {
            throw ConfigError("iterate: horizon does not match the OCP");
        }
        for (const auto& v : x) require_dim(v.size(), spec.nx(), "iterate: state");
        for (const auto& v : u) require_dim(v.size(), spec.nu(), "iterate: control");
        if (static_cast<int>(lambda.size()) != spec.N + 1 || bound.size() != lambda.size()
            || bound_nominal.size() != lambda.size()) {
            throw ConfigError("iterate: constraint storage does not match the OCP");
        }
        for (int k = 0; k <= spec.N; ++k) {
            require_dim(bound[k].size(), spec.num_rows(k), "iterate: bound");
            require_dim(lambda[k].size(), spec.num_rows(k), "iterate: multipliers");
        }
    }
};

/// Nanosecond counters of the last preparation/feedback cycle.
struct PhaseTimings {
    std::int64_t prepare_ns = 0;
    std::int64_t condense_ns = 0; ///< part of prepare
    std::int64_t propagation_ns = 0;
    std::int64_t feedback_ns = 0;
    std::int64_t qp_ns = 0; ///< part of feedback
};

/// QP row selection: node k, constraint row i.
struct QpRow {
    int node;
    int row;
};

/// Everything the feedback phase needs that does not depend on the measured state.
/// Condensed in the control increments du = (du_0, ..., du_{N-1}) with dx_0 = e := xbar_0 - x_0:
///   dx_k = Phi_k e + Gamma_k du + c_k
struct PreparedWorkspace {
    bool valid = false;
    std::vector<Matrix> Phi;   // nx x nx
    std::vector<Matrix> Gamma; // nx x (k nu)
    std::vector<Vector> c;     // accumulated defects
    Matrix H;                  // condensed Hessian
    Vector g0;                 // gradient at e = 0
    Matrix Ge;                 // gradient sensitivity w.r.t. e
    std::vector<QpRow> rows;   // rows entering the QP
    Matrix C;                  // m x (N nu)
    Vector d0;                 // h + dh_x c_k
    Matrix De;                 // dh_x Phi_k
    double max_defect = 0.0;
};

struct FeedbackResult {
    Vector u0;
    QpSolution qp;
    bool applied = false;
    double step_norm = 0.0; ///< infinity norm of the primal step
};

struct KktResiduals {
    double stationarity = 0.0;
    double equality = 0.0;
    double inequality = 0.0;
    double complementarity = 0.0;
};

enum class SqpStatus { Converged, MaxIter, QpFailure, TightenedInfeasible };

inline std::string to_string(SqpStatus s)
{
    switch (s) {
    case SqpStatus::Converged: return "converged";
    case SqpStatus::MaxIter: return "max_iter";
    case SqpStatus::QpFailure: return "qp_failure";
    case SqpStatus::TightenedInfeasible: return "tightened_infeasible";
    }
    return "unknown";
}

struct IterationLog {
    KktResiduals kkt;
    double step_norm = 0.0;
    QpStatus qp_status = QpStatus::Optimal;
    int qp_iterations = 0;
    double qp_kkt = 0.0;
    PhaseTimings timings;
};

class SqpSolver;

/// Called after every preparation phase and before the following feedback phase.
using BoundHook = std::function<void(SqpSolver&)>;

struct SqpResult {
    Iterate iterate;
    SqpStatus status = SqpStatus::MaxIter;
    QpStatus last_qp_status = QpStatus::Optimal;
    int iterations = 0;
    std::vector<IterationLog> log;
    std::vector<std::pair<std::vector<Vector>, std::vector<Vector>>> history; ///< (x, u) after each step
};

/// Gauss-Newton SQP with full condensing, split into a preparation phase (linearize,
/// condense) and a feedback phase (insert xbar_0 and bounds, solve QP, take full step).
class SqpSolver {
public:
    SqpSolver(OcpPtr spec, SqpSettings settings = {})
        : spec_(std::move(spec)), settings_(settings), qp_solver_(settings.qp)
    {
        if (!spec_) throw ConfigError("sqp: OCP missing");
        settings_.validate();
        iterate_ = Iterate::zeros(*spec_);
        y_ref_ = spec_->cost.y_ref;
        y_ref_N_ = spec_->cost.y_ref_N;
    }

    const OcpSpec& spec() const { return *spec_; }
    const OcpPtr& spec_ptr() const { return spec_; }
    const SqpSettings& settings() const { return settings_; }
    const Iterate& iterate() const { return iterate_; }
    Iterate& iterate() { return iterate_; }
    const PreparedWorkspace& workspace() const { return ws_; }
    const PhaseTimings& timings() const { return timings_; }
    PhaseTimings& timings() { return timings_; }

    void set_iterate(Iterate it)
    {
        it.check(*spec_);
        if (static_cast<int>(it.cache.size()) != spec_->N + 1) it.cache.assign(spec_->N + 1, NodeCache{});
        iterate_ = std::move(it);
        ws_.valid = false;
    }

    void set_reference(int k, const Vector& y)
    {
        require_dim(y.size(), spec_->cost.W.rows(), "stage reference");
        y_ref_.at(static_cast<std::size_t>(k)) = y;
        ws_.valid = false;
    }

    void set_terminal_reference(const Vector& y)
    {
        require_dim(y.size(), spec_->cost.W_N.rows(), "terminal reference");
        y_ref_N_ = y;
        ws_.valid = false;
    }

    // -----------------------------------------------------------------------
    // Preparation phase
    // -----------------------------------------------------------------------
    void prepare()
    {
        const Stopwatch sw;
        const OcpSpec& sp = *spec_;
        const int N = sp.N;
        for (const auto& v : iterate_.x) {
            if (!v.allFinite()) throw NumericalError("prepare: non-finite state trajectory");
        }
        for (const auto& v : iterate_.u) {
            if (!v.allFinite()) throw NumericalError("prepare: non-finite control trajectory");
        }
        iterate_.cache.resize(N + 1);
        for (int k = 0; k <= N; ++k) linearize_node(k);
        const Stopwatch sw_cond;
        condense_prepared();
        timings_.condense_ns = sw_cond.elapsed_ns();
        ws_.valid = true;
        timings_.prepare_ns = sw.elapsed_ns();
    }

    /// Re-evaluates a single node's linearization at the stored trajectory.
    void linearize_node(int k)
    {
        const OcpSpec& sp = *spec_;
        NodeCache& nc = iterate_.cache[k];
        const Vector& x = iterate_.x[k];
        const auto& cost = sp.cost;
        if (k < sp.N) {
            const Vector& u = iterate_.u[k];
            try {
                DiscreteStepResult step = integrate(*sp.model, x, u, sp.integrator);
                nc.A = std::move(step.A);
                nc.B = std::move(step.B);
                nc.x_next = std::move(step.x_next);
            } catch (const IntegrationError& e) {
                throw IntegrationError("node " + std::to_string(k) + ": " + e.what(), e.stage());
            }
            ConstraintEval ce = eval_constraints(sp, k, x, u);
            nc.h = std::move(ce.values);
            nc.dh = std::move(ce.gradient);
            const Vector res = cost.Vx * x + cost.Vu * u - y_ref_[k];
            const Matrix WVx = cost.W * cost.Vx;
            nc.Q = cost.Vx.transpose() * WVx;
            nc.S = cost.Vu.transpose() * WVx;
            nc.R = cost.Vu.transpose() * cost.W * cost.Vu;
            nc.q = cost.Vx.transpose() * (cost.W * res);
            nc.r = cost.Vu.transpose() * (cost.W * res);
        } else {
            ConstraintEval ce = eval_constraints(sp, k, x, Vector::Zero(sp.nu()));
            nc.h = std::move(ce.values);
            nc.dh = std::move(ce.gradient);
            const Vector res = cost.Vx_N * x - y_ref_N_;
            nc.Q = cost.Vx_N.transpose() * cost.W_N * cost.Vx_N;
            nc.q = cost.Vx_N.transpose() * (cost.W_N * res);
            nc.S.resize(0, 0);
            nc.R.resize(0, 0);
            nc.r.resize(0);
            nc.A.resize(0, 0);
            nc.B.resize(0, 0);
            nc.x_next.resize(0);
        }
    }

    // -----------------------------------------------------------------------
    // Feedback phase
    // -----------------------------------------------------------------------

    /// Condensed QP for the measured state `x0_bar` and the current bounds.
    DenseQp condense(const Vector& x0_bar) const
    {
        require_prepared();
        require_dim(x0_bar.size(), spec_->nx(), "feedback: x0_bar");
        const Vector e = x0_bar - iterate_.x[0];
        DenseQp qp;
        qp.H = ws_.H;
        qp.g = ws_.g0 + ws_.Ge * e;
        qp.C = ws_.C;
        qp.d = ws_.d0 + ws_.De * e;
        for (std::size_t j = 0; j < ws_.rows.size(); ++j) {
            const QpRow& r = ws_.rows[j];
            qp.d[static_cast<Index>(j)] -= iterate_.bound[r.node][r.row];
        }
        return qp;
    }

    FeedbackResult feedback(const Vector& x0_bar)
    {
        const Stopwatch sw;
        const DenseQp qp = condense(x0_bar);
        const Stopwatch sw_qp;
        FeedbackResult fr;
        fr.qp = qp_solver_.solve(qp);
        timings_.qp_ns = sw_qp.elapsed_ns();
        if (fr.qp.status == QpStatus::Optimal) {
            fr.step_norm = apply_step(x0_bar, fr.qp);
            fr.applied = true;
        }
        fr.u0 = iterate_.u[0];
        timings_.feedback_ns = sw.elapsed_ns();
        return fr;
    }

    /// One complete SQP iteration (preparation immediately followed by feedback).
    FeedbackResult step(const Vector& x0_bar)
    {
        prepare();
        return feedback(x0_bar);
    }

    /// KKT residuals of the nonlinear problem at the prepared point, using the stored multipliers.
    KktResiduals kkt_residuals(const Vector& x0_bar) const
    {
        require_prepared();
        KktResiduals res;
        const OcpSpec& sp = *spec_;
        res.equality = std::max(ws_.max_defect, (x0_bar - iterate_.x[0]).lpNorm<Eigen::Infinity>());
        const DenseQp qp = condense(x0_bar);
        Vector lam(static_cast<Index>(ws_.rows.size()));
        for (std::size_t j = 0; j < ws_.rows.size(); ++j) {
            const QpRow& r = ws_.rows[j];
            const Index jj = static_cast<Index>(j);
            lam[jj] = iterate_.lambda[r.node][r.row];
            const double slack = iterate_.cache[r.node].h[r.row] - iterate_.bound[r.node][r.row];
            res.inequality = std::max(res.inequality, slack);
            res.complementarity = std::max(res.complementarity, std::abs(lam[jj] * slack));
        }
        (void)sp;
        res.stationarity = (qp.g + qp.C.transpose() * lam).lpNorm<Eigen::Infinity>();
        return res;
    }

    bool kkt_satisfied(const KktResiduals& r) const
    {
        return r.stationarity <= settings_.tol_stationarity && r.equality <= settings_.tol_equality
            && r.inequality <= settings_.tol_inequality && r.complementarity <= settings_.tol_complementarity;
    }

    /// SQP iterations until the KKT tolerances hold or max_iter QP steps were taken.
    /// `hook` runs after each preparation and before the convergence check / feedback.
    SqpResult solve(const Vector& x0_bar, const BoundHook& hook = {})
    {
        SqpResult out;
        for (int it = 0;; ++it) {
            IterationLog log;
            prepare();
            if (hook) {
                const Stopwatch sw;
                hook(*this);
                timings_.propagation_ns = sw.elapsed_ns();
            } else {
                timings_.propagation_ns = 0;
            }
            log.kkt = kkt_residuals(x0_bar);
            if (it > 0 && kkt_satisfied(log.kkt)) {
                out.status = SqpStatus::Converged;
                out.iterations = it;
                log.timings = timings_;
                out.log.push_back(log);
                break;
            }
            if (it == settings_.max_iter) {
                out.status = SqpStatus::MaxIter;
                out.iterations = it;
                log.timings = timings_;
                out.log.push_back(log);
                break;
            }
            FeedbackResult fr = feedback(x0_bar);
            log.step_norm = fr.step_norm;
            log.qp_status = fr.qp.status;
            log.qp_iterations = fr.qp.iterations;
            log.qp_kkt = fr.qp.kkt_residual;
            log.timings = timings_;
            out.log.push_back(log);
            out.last_qp_status = fr.qp.status;
            if (!fr.applied) {
                out.status = SqpStatus::QpFailure;
                out.iterations = it + 1;
                break;
            }
            if (settings_.record_history) out.history.emplace_back(iterate_.x, iterate_.u);
        }
        out.iterate = iterate_;
        return out;
    }

    /// Shift-by-one warm start with duplication of the last node.
    void shift()
    {
        const int N = spec_->N;
        for (int k = 0; k < N; ++k) iterate_.x[k] = iterate_.x[k + 1];
        for (int k = 0; k + 1 < N; ++k) {
            iterate_.u[k] = iterate_.u[k + 1];
            iterate_.lambda[k] = iterate_.lambda[k + 1];
        }
        // node N-1 keeps its control; its multipliers are kept as well (same row layout)
        ws_.valid = false;
    }

private:
    void require_prepared() const
    {
        if (!ws_.valid) throw ConfigError("sqp: feedback requested before prepare");
    }

    void condense_prepared()
    {
        const OcpSpec& sp = *spec_;
        const int N = sp.N;
        const int nx = sp.nx();
        const int nu = sp.nu();
        const Index nU = Index(N) * nu;
        auto& w = ws_;

        w.Phi.resize(N + 1);
        w.Gamma.resize(N + 1);
        w.c.resize(N + 1);
        w.Phi[0] = Matrix::Identity(nx, nx);
        w.Gamma[0] = Matrix::Zero(nx, 0);
        w.c[0] = Vector::Zero(nx);
        w.max_defect = 0.0;
        for (int k = 0; k < N; ++k) {
            const NodeCache& nc = iterate_.cache[k];
            const Vector defect = nc.x_next - iterate_.x[k + 1];
            w.max_defect = std::max(w.max_defect, defect.lpNorm<Eigen::Infinity>());
            w.Phi[k + 1].noalias() = nc.A * w.Phi[k];
            Matrix G(nx, Index(k + 1) * nu);
            G.leftCols(Index(k) * nu).noalias() = nc.A * w.Gamma[k];
            G.rightCols(nu) = nc.B;
            w.Gamma[k + 1] = std::move(G);
            w.c[k + 1].noalias() = nc.A * w.c[k];
            w.c[k + 1] += defect;
        }

        // Cost
        w.H = Matrix::Zero(nU, nU);
        w.g0 = Vector::Zero(nU);
        w.Ge = Matrix::Zero(nU, nx);
        for (int k = 0; k <= N; ++k) {
            const NodeCache& nc = iterate_.cache[k];
            const Index cols = Index(k) * nu;
            const Matrix& G = w.Gamma[k];
            const Vector lin_x = nc.Q * w.c[k] + nc.q;
            const Matrix QPhi = nc.Q * w.Phi[k];
            if (cols > 0) {
                const Matrix QG = nc.Q * G;
                w.H.topLeftCorner(cols, cols).noalias() += G.transpose() * QG;
                w.g0.head(cols).noalias() += G.transpose() * lin_x;
                w.Ge.topRows(cols).noalias() += G.transpose() * QPhi;
            }
            if (k < N) {
                const Index uk = Index(k) * nu;
                if (cols > 0) {
                    const Matrix SG = nc.S * G;
                    w.H.block(uk, 0, nu, cols) += SG;
                    w.H.block(0, uk, cols, nu) += SG.transpose();
                }
                w.H.block(uk, uk, nu, nu) += nc.R;
                w.g0.segment(uk, nu) += nc.S * w.c[k] + nc.r;
                w.Ge.middleRows(uk, nu) += nc.S * w.Phi[k];
            }
        }
        w.H = symmetrized(w.H);
        if (settings_.levenberg > 0.0) w.H.diagonal().array() += settings_.levenberg;

        // Constraints. Rows at node 0 that do not depend on the control are fixed by xbar_0
        // and therefore left out of the QP.
        w.rows.clear();
        for (int k = 0; k <= N; ++k) {
            const auto& rows = sp.rows(k);
            for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
                if (k == 0 && !rows[static_cast<std::size_t>(i)].depends_on_control) continue;
                w.rows.push_back({k, i});
            }
        }
        const Index m = static_cast<Index>(w.rows.size());
        w.C = Matrix::Zero(m, nU);
        w.d0 = Vector::Zero(m);
        w.De = Matrix::Zero(m, nx);
        for (Index j = 0; j < m; ++j) {
            const QpRow& r = w.rows[static_cast<std::size_t>(j)];
            const NodeCache& nc = iterate_.cache[r.node];
            const auto gx = nc.dh.row(r.row).head(nx);
            const Index cols = Index(r.node) * nu;
            if (cols > 0) w.C.row(j).head(cols).noalias() = gx * w.Gamma[r.node];
            if (r.node < N) w.C.row(j).segment(cols, nu) += nc.dh.row(r.row).tail(nu);
            w.d0[j] = nc.h[r.row] + gx.dot(w.c[r.node]);
            w.De.row(j).noalias() = gx * w.Phi[r.node];
        }
    }

    double apply_step(const Vector& x0_bar, const QpSolution& sol)
    {
        const OcpSpec& sp = *spec_;
        const int N = sp.N;
        const int nu = sp.nu();
        const Vector e = x0_bar - iterate_.x[0];
        double norm = 0.0;
        for (int k = 0; k <= N; ++k) {
            Vector dx = ws_.Phi[k] * e + ws_.c[k];
            if (k > 0) dx.noalias() += ws_.Gamma[k] * sol.z.head(Index(k) * nu);
            norm = std::max(norm, dx.lpNorm<Eigen::Infinity>());
            iterate_.x[k] += dx;
        }
        iterate_.x[0] = x0_bar;
        for (int k = 0; k < N; ++k) {
            const auto du = sol.z.segment(Index(k) * nu, nu);
            norm = std::max(norm, du.lpNorm<Eigen::Infinity>());
            iterate_.u[k] += du;
        }
        for (auto& l : iterate_.lambda) l.setZero();
        for (std::size_t j = 0; j < ws_.rows.size(); ++j) {
            const QpRow& r = ws_.rows[j];
            iterate_.lambda[r.node][r.row] = sol.lambda[static_cast<Index>(j)];
        }
        ws_.valid = false;
        return norm;
    }

    OcpPtr spec_;
    SqpSettings settings_;
    QpSolver qp_solver_;
    Iterate iterate_;
    std::vector<Vector> y_ref_;
    Vector y_ref_N_;
    PreparedWorkspace ws_;
    PhaseTimings timings_;
};

/// Convenience wrapper: solve the nominal OCP from `guess` with initial state guess.x[0].
inline SqpResult sqp_solve(const OcpPtr& spec, const Iterate& guess, const SqpSettings& settings = {},
                           const BoundHook& hook = {})
{
    SqpSolver solver(spec, settings);
    solver.set_iterate(guess);
    return solver.solve(guess.x.at(0), hook);
}

} // namespace zoro

#endif // ZORO_SQP_RTI_HPP
