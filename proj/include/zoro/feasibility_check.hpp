#ifndef ZORO_FEASIBILITY_CHECK_HPP
#define ZORO_FEASIBILITY_CHECK_HPP

#include "zoro/io.hpp"
#include "zoro/ocp.hpp"
#include "zoro/zoro.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace zoro {

/// Stand-alone verification of a stored solution. The uncertainty recursion and the
/// backoffs are recomputed here with plain loops; nothing from the solver's update is reused.
struct Violation {
    enum class Kind { Dynamics, Nominal, Tightened };
    Kind kind;
    int node;
    int row; ///< constraint row, or state index for dynamics defects
    std::string label;
    double value; ///< h, h + beta or the defect
};

inline std::string to_string(Violation::Kind k)
{
    switch (k) {
    case Violation::Kind::Dynamics: return "dynamics";
    case Violation::Kind::Nominal: return "nominal";
    case Violation::Kind::Tightened: return "tightened";
    }
    return "unknown";
}

struct FeasibilityReport {
    std::vector<Violation> violations;
    double max_tightened = -kInf; ///< max of h + beta over tightened rows
    double max_nominal = -kInf;   ///< max of h over the remaining rows
    double max_defect = 0.0;
    std::vector<Matrix> P;
    std::vector<Vector> beta;

    bool ok() const { return violations.empty(); }
};

namespace check_detail {

inline Matrix propagate_loops(const Matrix& A, const Matrix& B, const Matrix& K, const Matrix& P, const Matrix& G,
                              const Matrix& W)
{
    const Index n = A.rows(), m = B.cols(), nw = W.rows();
    Matrix AK(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double s = A(i, j);
            for (Index l = 0; l < m; ++l) s += B(i, l) * K(l, j);
            AK(i, j) = s;
        }
    }
    Matrix T(n, n); // AK P
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double s = 0.0;
            for (Index l = 0; l < n; ++l) s += AK(i, l) * P(l, j);
            T(i, j) = s;
        }
    }
    Matrix GW(n, nw);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < nw; ++j) {
            double s = 0.0;
            for (Index l = 0; l < nw; ++l) s += G(i, l) * W(l, j);
            GW(i, j) = s;
        }
    }
    Matrix out(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double s = 0.0;
            for (Index l = 0; l < n; ++l) s += T(i, l) * AK(j, l);
            for (Index l = 0; l < nw; ++l) s += GW(i, l) * G(j, l);
            out(i, j) = s;
        }
    }
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            const double s = 0.5 * (out(i, j) + out(j, i));
            out(i, j) = out(j, i) = s;
        }
    }
    return out;
}

inline double backoff_loops(const RowVector& grad, const Matrix& K, const Matrix& P, double gamma)
{
    const Index n = P.rows(), m = K.rows();
    std::vector<double> v(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        double s = grad[i];
        for (Index l = 0; l < m; ++l) s += K(l, i) * grad[n + l];
        v[std::size_t(i)] = s;
    }
    double q = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) q += v[std::size_t(i)] * P(i, j) * v[std::size_t(j)];
    }
    return gamma * std::sqrt(std::max(q, 0.0));
}

} // namespace check_detail

/// Checks h + beta <= tol on tightened rows, h <= tol on all other rows and the shooting
/// defects |x_{k+1} - psi(x_k, u_k)| <= tol.
inline FeasibilityReport check_feasibility(const OcpSpec& spec, const ZoroConfig& cfg, const Trajectory& traj,
                                           double tol = 1e-6)
{
    cfg.validate(spec);
    const int N = spec.N;
    if (static_cast<int>(traj.x.size()) != N + 1 || static_cast<int>(traj.u.size()) != N) {
        throw ConfigError("check: trajectory horizon does not match the OCP");
    }
    FeasibilityReport rep;
    rep.P.resize(N + 1);
    rep.beta.resize(N + 1);
    rep.P[0] = cfg.P0_bar;
    for (int k = 0; k <= N; ++k) {
        const Vector& x = traj.x[k];
        const Vector u = k < N ? traj.u[k] : Vector::Zero(spec.nu());
        const ConstraintEval ce = eval_constraints(spec, k, x, u);
        const auto& rows = spec.rows(k);
        const auto& tight = cfg.tighten_idx(spec, k);
        rep.beta[k] = Vector::Zero(spec.num_rows(k));
        for (int i = 0; i < spec.num_rows(k); ++i) {
            const bool tightened = std::find(tight.begin(), tight.end(), i) != tight.end();
            double value = ce.values[i];
            if (tightened) {
                rep.beta[k][i] = check_detail::backoff_loops(ce.gradient.row(i), cfg.K, rep.P[k], cfg.gamma);
                value += rep.beta[k][i];
                rep.max_tightened = std::max(rep.max_tightened, value);
            } else {
                rep.max_nominal = std::max(rep.max_nominal, value);
            }
            if (!(value <= tol)) {
                rep.violations.push_back({tightened ? Violation::Kind::Tightened : Violation::Kind::Nominal, k, i,
                                          rows[std::size_t(i)].label, value});
            }
        }
        if (k == N) break;
        const DiscreteStepResult step = integrate(*spec.model, x, u, spec.integrator);
        for (Index i = 0; i < x.size(); ++i) {
            const double d = std::abs(traj.x[k + 1][i] - step.x_next[i]);
            rep.max_defect = std::max(rep.max_defect, d);
            if (!(d <= tol)) {
                rep.violations.push_back({Violation::Kind::Dynamics, k, static_cast<int>(i),
                                          "x" + std::to_string(i), d});
            }
        }
        const Matrix W = cfg.noise_override ? cfg.noise_override(k, x, u) : cfg.W;
        rep.P[k + 1] = check_detail::propagate_loops(step.A, step.B, cfg.K, rep.P[k], cfg.G, W);
    }
    return rep;
}

} // namespace zoro

#endif // ZORO_FEASIBILITY_CHECK_HPP
