#ifndef ZORO_OCP_HPP
#define ZORO_OCP_HPP

#include "zoro/integrator.hpp"
#include "zoro/model.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace zoro {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Two-sided box bound on one state or control component. Infinite sides are dropped.
struct BoxBound {
    int index = 0;
    double lower = -kInf;
    double upper = kInf;
    std::string name; ///< used to label the normalized rows
};

/// Nonlinear row h(x, u) <= 0 with analytic gradient over [x; u].
struct NonlinearRow {
    std::string label;
    bool depends_on_control = false;
    std::function<double(const Vector& x, const Vector& u)> value;
    std::function<RowVector(const Vector& x, const Vector& u)> gradient;
};

/// One-sided row h(x, u) <= 0. Linear rows are g [x; u] + offset.
struct ConstraintRow {
    enum class Kind { Linear, Nonlinear };

    Kind kind = Kind::Linear;
    std::string label;
    bool depends_on_control = false;
    RowVector linear_gradient; // Linear only
    double offset = 0.0;       // Linear only
    NonlinearRow nonlinear;    // Nonlinear only

    bool same_as(const ConstraintRow& o) const
    {
        if (kind != o.kind || label != o.label || depends_on_control != o.depends_on_control) {
            return false;
        }
        if (kind == Kind::Nonlinear) return nonlinear.label == o.nonlinear.label;
        return offset == o.offset && linear_gradient.size() == o.linear_gradient.size()
            && linear_gradient == o.linear_gradient;
    }
};

/// Constraint description of one node type. After `normalized()` only `rows` is populated,
/// ordered as state-bound rows, control-bound rows, then nonlinear rows.
struct ConstraintSet {
    std::vector<BoxBound> state_bounds;
    std::vector<BoxBound> control_bounds;
    std::vector<NonlinearRow> nonlinear;
    std::vector<ConstraintRow> rows;

    bool is_normalized() const
    {
        return state_bounds.empty() && control_bounds.empty() && nonlinear.empty();
    }
};

inline ConstraintSet normalized(const ConstraintSet& set, int nx, int nu)
{
    ConstraintSet out;
    auto add_box = [&](const BoxBound& b, int offset, int dim, bool control, const char* prefix) {
        if (b.index < 0 || b.index >= dim) {
            throw ConfigError(std::string("box bound index out of range: ") + prefix
                              + std::to_string(b.index));
        }
        if (b.lower > b.upper) throw ConfigError("box bound with lower > upper");
        const std::string base = b.name.empty() ? prefix + std::to_string(b.index) : b.name;
        if (std::isfinite(b.upper)) {
            ConstraintRow r;
            r.label = "ub_" + base;
            r.depends_on_control = control;
            r.linear_gradient = RowVector::Zero(nx + nu);
            r.linear_gradient[offset + b.index] = 1.0;
            r.offset = -b.upper;
            out.rows.push_back(std::move(r));
        }
        if (std::isfinite(b.lower)) {
            ConstraintRow r;
            r.label = "lb_" + base;
            r.depends_on_control = control;
            r.linear_gradient = RowVector::Zero(nx + nu);
            r.linear_gradient[offset + b.index] = -1.0;
            r.offset = b.lower;
            out.rows.push_back(std::move(r));
        }
    };
    for (const auto& b : set.state_bounds) add_box(b, 0, nx, false, "x");
    for (const auto& b : set.control_bounds) add_box(b, nx, nu, true, "u");
    for (const auto& r : set.rows) {
        if (r.kind == ConstraintRow::Kind::Linear) require_dim(r.linear_gradient.size(), nx + nu, "linear row");
        out.rows.push_back(r);
    }
    for (const auto& n : set.nonlinear) {
        if (!n.value || !n.gradient) throw ConfigError("nonlinear row '" + n.label + "' lacks a function");
        ConstraintRow r;
        r.kind = ConstraintRow::Kind::Nonlinear;
        r.label = n.label;
        r.depends_on_control = n.depends_on_control;
        r.nonlinear = n;
        out.rows.push_back(std::move(r));
    }
    return out;
}

/// Linear least-squares cost
///   sum_k 0.5 |Vx x_k + Vu u_k - y_ref_k|^2_W + 0.5 |Vx_N x_N - y_ref_N|^2_{W_N}
struct LeastSquaresCost {
    Matrix Vx, Vu, W;
    std::vector<Vector> y_ref; ///< one per stage node
    Matrix Vx_N, W_N;
    Vector y_ref_N;
};

/// Multiple-shooting OCP with one-sided constraints and tightening index sets.
struct OcpSpec {
    int N = 1;
    double T = 1.0;
    ModelPtr model;
    IntegratorConfig integrator;
    LeastSquaresCost cost;
    ConstraintSet stage_constraints;    ///< nodes 0..N-1
    ConstraintSet terminal_constraints; ///< node N
    std::vector<int> tighten_idx_0;
    std::vector<int> tighten_idx_mid;
    std::vector<int> tighten_idx_N;

    int nx() const { return model->nx(); }
    int nu() const { return model->nu(); }
    double dt() const { return T / N; }

    const std::vector<ConstraintRow>& rows(int k) const
    {
        return (k == N ? terminal_constraints : stage_constraints).rows;
    }
    int num_rows(int k) const { return static_cast<int>(rows(k).size()); }

    const std::vector<int>& tighten_idx(int k) const
    {
        if (k == 0) return tighten_idx_0;
        if (k == N) return tighten_idx_N;
        return tighten_idx_mid;
    }

    /// Normalizes the constraint sets and checks every invariant. Call once after assembly.
    void finalize()
    {
        if (!model) throw ConfigError("ocp: model missing");
        if (N < 1) throw ConfigError("ocp: N must be >= 1");
        if (!(T > 0.0)) throw ConfigError("ocp: T must be > 0");
        integrator.step_size = T / N;
        integrator.validate();
        stage_constraints = normalized(stage_constraints, nx(), nu());
        terminal_constraints = normalized(terminal_constraints, nx(), nu());
        for (const auto& r : terminal_constraints.rows) {
            if (r.depends_on_control) {
                throw ConfigError("ocp: terminal row '" + r.label + "' depends on the control");
            }
        }
        for (int k : {0, 1, N}) {
            if (k > N) continue;
            std::set<int> seen;
            for (int i : tighten_idx(k)) {
                if (i < 0 || i >= num_rows(k)) {
                    throw ConfigError("ocp: tightening index " + std::to_string(i)
                                      + " does not refer to a constraint row at node "
                                      + std::to_string(k));
                }
                if (!seen.insert(i).second) {
                    throw ConfigError("ocp: duplicate tightening index " + std::to_string(i));
                }
            }
        }
        validate_cost();
    }

private:
    void validate_cost() const
    {
        const auto& c = cost;
        const Index ny = c.W.rows();
        require_dim(c.W.cols(), ny, "cost W columns");
        require_dim(c.Vx.rows(), ny, "cost Vx rows");
        require_dim(c.Vx.cols(), nx(), "cost Vx columns");
        require_dim(c.Vu.rows(), ny, "cost Vu rows");
        require_dim(c.Vu.cols(), nu(), "cost Vu columns");
        if (static_cast<int>(c.y_ref.size()) != N) {
            throw ConfigError("cost: expected " + std::to_string(N) + " stage references");
        }
        for (const auto& y : c.y_ref) require_dim(y.size(), ny, "cost stage reference");
        const Index nyN = c.W_N.rows();
        require_dim(c.W_N.cols(), nyN, "cost W_N columns");
        require_dim(c.Vx_N.rows(), nyN, "cost Vx_N rows");
        require_dim(c.Vx_N.cols(), nx(), "cost Vx_N columns");
        require_dim(c.y_ref_N.size(), nyN, "cost terminal reference");
        check_psd(c.W, "cost W");
        check_psd(c.W_N, "cost W_N");
    }

    static void check_psd(const Matrix& M, const char* what)
    {
        if (M.size() == 0) return;
        if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff())) {
            throw ConfigError(std::string(what) + " is not symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(M);
        if (es.eigenvalues().minCoeff() < -1e-12) {
            throw ConfigError(std::string(what) + " is not positive semidefinite");
        }
    }
};

using OcpPtr = std::shared_ptr<const OcpSpec>;

/// Stacked constraint values and gradients at node k. Gradient rows are over [x; u];
/// at the terminal node the control block is zero.
struct ConstraintEval {
    Vector values;
    Matrix gradient;
};

inline ConstraintEval eval_constraints(const OcpSpec& spec, int k, const Vector& x, const Vector& u)
{
    if (k < 0 || k > spec.N) throw ConfigError("eval_constraints: node index out of range");
    const int nx = spec.nx();
    const int nu = spec.nu();
    require_dim(x.size(), nx, "eval_constraints: state");
    const Vector u_eff = (k == spec.N) ? Vector(Vector::Zero(nu)) : u;
    if (k < spec.N) require_dim(u.size(), nu, "eval_constraints: control");

    const auto& rows = spec.rows(k);
    ConstraintEval out;
    out.values.resize(static_cast<Index>(rows.size()));
    out.gradient.resize(static_cast<Index>(rows.size()), nx + nu);
    Vector xu(nx + nu);
    xu << x, u_eff;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const Index ii = static_cast<Index>(i);
        if (r.kind == ConstraintRow::Kind::Linear) {
            out.values[ii] = r.linear_gradient.dot(xu) + r.offset;
            out.gradient.row(ii) = r.linear_gradient;
        } else {
            out.values[ii] = r.nonlinear.value(x, u_eff);
            out.gradient.row(ii) = r.nonlinear.gradient(x, u_eff);
        }
    }
    if (k == spec.N) out.gradient.rightCols(nu).setZero();
    return out;
}

} // namespace zoro

#endif // ZORO_OCP_HPP
