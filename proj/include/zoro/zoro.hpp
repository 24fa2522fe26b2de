#ifndef ZORO_ZORO_HPP
#define ZORO_ZORO_HPP

#include "zoro/sqp_rti.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace zoro {

/// Settings of the zero-order robust update.
struct ZoroConfig {
    Matrix P0_bar;     ///< nx x nx initial uncertainty matrix
    Matrix K;          ///< nu x nx constant feedback gain
    Matrix W;          ///< nw x nw noise covariance / ellipsoid shape
    Matrix G;          ///< nx x nw noise sensitivity
    double gamma = 1.0;
    /// Tightening index sets; when empty optional the OCP's sets are used.
    std::optional<std::vector<int>> tighten_idx_0, tighten_idx_mid, tighten_idx_N;
    /// Optional per-node replacement of W, evaluated at the nominal (x_k, u_k).
    std::function<Matrix(int k, const Vector& x, const Vector& u)> noise_override;

    /// Zero-uncertainty configuration with G = I.
    static ZoroConfig zero(int nx, int nu)
    {
        ZoroConfig c;
        c.P0_bar = Matrix::Zero(nx, nx);
        c.K = Matrix::Zero(nu, nx);
        c.W = Matrix::Zero(nx, nx);
        c.G = Matrix::Identity(nx, nx);
        return c;
    }

    const std::vector<int>& tighten_idx(const OcpSpec& spec, int k) const
    {
        const auto& own = (k == 0) ? tighten_idx_0 : (k == spec.N ? tighten_idx_N : tighten_idx_mid);
        return own ? *own : spec.tighten_idx(k);
    }

    /// Full validation, including the PSD checks.
    void validate(const OcpSpec& spec) const
    {
        check_shapes(spec);
        check_psd(P0_bar, "P0_bar");
        check_psd(W, "W");
    }

    /// Dimension, range and sign checks only (cheap enough for every update).
    void check_shapes(const OcpSpec& spec) const
    {
        const Index nx = spec.nx();
        const Index nu = spec.nu();
        auto shape = [](const Matrix& m, Index r, Index c, const char* what) {
            if (m.rows() != r || m.cols() != c) {
                throw ConfigError(std::string("zoro: ") + what + " must be " + std::to_string(r) + "x"
                                  + std::to_string(c) + ", got " + std::to_string(m.rows()) + "x"
                                  + std::to_string(m.cols()));
            }
        };
        shape(P0_bar, nx, nx, "P0_bar");
        shape(K, nu, nx, "K");
        if (W.rows() != W.cols()) throw ConfigError("zoro: W must be square");
        shape(G, nx, W.rows(), "G");
        if (!(gamma >= 0.0)) throw ConfigError("zoro: gamma must be >= 0");
        for (int k : {0, 1, spec.N}) {
            if (k > spec.N) continue;
            for (int i : tighten_idx(spec, k)) {
                if (i < 0 || i >= spec.num_rows(k)) {
                    throw ConfigError("zoro: tightening index " + std::to_string(i) + " out of range at node "
                                      + std::to_string(k));
                }
            }
        }
    }

private:
    static void check_psd(const Matrix& M, const char* what)
    {
        if (M.size() == 0) return;
        const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
        if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw ConfigError(std::string("zoro: ") + what + " is not symmetric");
        }
        if (Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues().minCoeff() < -1e-12 * scale) {
            throw ConfigError(std::string("zoro: ") + what + " is not positive semidefinite");
        }
    }
};

/// Uncertainty matrices P_0..P_N and per-node backoffs (zero outside the tightening sets).
struct TubeState {
    std::vector<Matrix> P;
    std::vector<Vector> beta;
};

/// P+ = sym((A + B K) P (A + B K)' + G W G')
inline Matrix propagate_uncertainty(const Matrix& A, const Matrix& B, const Matrix& K, const Matrix& P,
                                    const Matrix& G, const Matrix& W)
{
    Matrix AK = A;
    AK.noalias() += B * K;
    Matrix M = G * W * G.transpose();
    M.noalias() += AK * P * AK.transpose();
    return symmetrized(M);
}

/// gamma * sqrt(v' P v) with v = dh_x + K' dh_u, for a gradient over [x; u].
inline double compute_backoff(const Eigen::Ref<const RowVector>& grad_h, const Matrix& K, const Matrix& P,
                              double gamma)
{
    const Index nx = P.rows();
    require_dim(grad_h.size(), nx + K.rows(), "compute_backoff: gradient");
    Vector v = grad_h.head(nx).transpose();
    if (K.rows() > 0) v.noalias() += K.transpose() * grad_h.tail(K.rows()).transpose();
    const double q = v.dot(P * v);
    if (q < 0.0) {
        const double scale = std::max(1.0, v.squaredNorm() * P.cwiseAbs().maxCoeff());
        if (q < -1e-14 * scale) {
            throw NumericalError("compute_backoff: negative quadratic form " + std::to_string(q)
                                 + " (uncertainty matrix not PSD)");
        }
        return 0.0;
    }
    return gamma * std::sqrt(q);
}

/// Propagates the uncertainty along the prepared linearization held by `solver` and replaces
/// the solver's bounds by (nominal bound - backoff) on the tightened rows.
/// Only shapes are checked here; run cfg.validate() once before the first update.
inline TubeState zoro_update(SqpSolver& solver, const ZoroConfig& cfg)
{
    const OcpSpec& spec = solver.spec();
    cfg.check_shapes(spec);
    if (!solver.workspace().valid) throw ConfigError("zoro_update: solver has not been prepared");
    Iterate& it = solver.iterate();
    const int N = spec.N;

    TubeState tube;
    tube.P.resize(N + 1);
    tube.beta.resize(N + 1);
    tube.P[0] = symmetrized(cfg.P0_bar);
    for (int k = 0; k <= N; ++k) {
        const NodeCache& nc = it.cache[k];
        if (k < N) {
            const Matrix W = cfg.noise_override ? cfg.noise_override(k, it.x[k], it.u[k]) : cfg.W;
            tube.P[k + 1] = propagate_uncertainty(nc.A, nc.B, cfg.K, tube.P[k], cfg.G, W);
        }
        Vector beta = Vector::Zero(spec.num_rows(k));
        for (int i : cfg.tighten_idx(spec, k)) {
            beta[i] = compute_backoff(nc.dh.row(i), cfg.K, tube.P[k], cfg.gamma);
        }
        it.bound[k] = it.bound_nominal[k] - beta;
        tube.beta[k] = std::move(beta);
    }
    return tube;
}

struct ZoroSqpResult {
    SqpResult sqp;
    TubeState tube;
};

inline bool any_backoff(const TubeState& t)
{
    for (const auto& b : t.beta) {
        if (b.size() > 0 && b.maxCoeff() > 0.0) return true;
    }
    return false;
}

/// SQP with the backoffs refreshed after every preparation phase.
inline ZoroSqpResult zoro_sqp(SqpSolver& solver, const ZoroConfig& cfg, const Vector& x0_bar)
{
    cfg.validate(solver.spec());
    ZoroSqpResult out;
    out.sqp = solver.solve(x0_bar, [&](SqpSolver& s) { out.tube = zoro_update(s, cfg); });
    if (out.sqp.status == SqpStatus::QpFailure && out.sqp.last_qp_status == QpStatus::Infeasible
        && any_backoff(out.tube)) {
        out.sqp.status = SqpStatus::TightenedInfeasible;
    }
    return out;
}

inline ZoroSqpResult zoro_sqp(const OcpPtr& spec, const ZoroConfig& cfg, const Iterate& guess,
                              const SqpSettings& settings = {})
{
    SqpSolver solver(spec, settings);
    solver.set_iterate(guess);
    return zoro_sqp(solver, cfg, guess.x.at(0));
}

// ---------------------------------------------------------------------------
// Real-time iteration variant
// ---------------------------------------------------------------------------

/// Preparation phase followed by the zoRO update at the (shifted) previous solution.
inline TubeState zoro_rti_prepare(SqpSolver& solver, const ZoroConfig& cfg)
{
    solver.prepare();
    const Stopwatch sw;
    TubeState tube = zoro_update(solver, cfg);
    solver.timings().propagation_ns = sw.elapsed_ns();
    return tube;
}

inline Vector zoro_rti_feedback(SqpSolver& solver, const Vector& x0_bar)
{
    FeedbackResult fr = solver.feedback(x0_bar);
    if (!fr.applied) {
        throw NumericalError("zoro_rti_feedback: QP " + to_string(fr.qp.status));
    }
    return fr.u0;
}

// ---------------------------------------------------------------------------
// Backoff factor from a probability level
// ---------------------------------------------------------------------------

enum class GammaMethod { Normal, Chebyshev };

namespace detail {

// Rational approximation of the standard normal quantile (P. J. Acklam),
// followed by one Halley step against erfc.
inline double inverse_normal_cdf(double p)
{
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

} // namespace detail

inline double gamma_from_probability(double p, GammaMethod method)
{
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("gamma_from_probability: p must lie in (0, 1)");
    if (method == GammaMethod::Chebyshev) return 1.0 / std::sqrt(1.0 - p);
    return detail::inverse_normal_cdf(p);
}

} // namespace zoro

#endif // ZORO_ZORO_HPP
