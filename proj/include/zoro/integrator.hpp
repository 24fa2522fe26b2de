#ifndef ZORO_INTEGRATOR_HPP
#define ZORO_INTEGRATOR_HPP

#include "zoro/model.hpp"

#include <cmath>
#include <string>

namespace zoro {

enum class IntegratorScheme { ERK4, IRK_GL4 };

inline std::string to_string(IntegratorScheme s)
{
    return s == IntegratorScheme::ERK4 ? "ERK4" : "IRK_GL4";
}

struct IntegratorConfig {
    IntegratorScheme scheme = IntegratorScheme::IRK_GL4;
    double step_size = 0.1; ///< length of one shooting interval [s]
    int newton_iters = 3;
    bool jacobian_reuse = true;
    int num_steps = 1; ///< sub-steps per shooting interval

    void validate() const
    {
        if (!(step_size > 0.0)) throw ConfigError("integrator: step_size must be > 0");
        if (newton_iters < 1) throw ConfigError("integrator: newton_iters must be >= 1");
        if (num_steps < 1) throw ConfigError("integrator: num_steps must be >= 1");
    }
};

/// Discrete map x+ = psi(x, u) together with A = dpsi/dx and B = dpsi/du.
struct DiscreteStepResult {
    Vector x_next;
    Matrix A;
    Matrix B;
    double newton_residual = 0.0; ///< IRK only, infinity norm of the last stage residual
};

namespace detail {

inline void check_finite_stage(const Vector& v, int stage)
{
    if (!v.allFinite()) {
        throw IntegrationError("non-finite value produced in stage " + std::to_string(stage), stage);
    }
}

// One RK4 step of size h, sensitivities by forward differentiation of the stages.
inline DiscreteStepResult erk4_substep(const Model& m, const Vector& x, const Vector& u, double h)
{
    const int nx = m.nx();
    const Matrix I = Matrix::Identity(nx, nx);

    const Vector k1 = m.f(x, u);
    check_finite_stage(k1, 1);
    const Matrix k1x = m.dfdx(x, u);
    const Matrix k1u = m.dfdu(x, u);

    const Vector x2 = x + 0.5 * h * k1;
    const Vector k2 = m.f(x2, u);
    check_finite_stage(k2, 2);
    Matrix fx = m.dfdx(x2, u);
    const Matrix k2x = fx * (I + 0.5 * h * k1x);
    const Matrix k2u = fx * (0.5 * h * k1u) + m.dfdu(x2, u);

    const Vector x3 = x + 0.5 * h * k2;
    const Vector k3 = m.f(x3, u);
    check_finite_stage(k3, 3);
    fx = m.dfdx(x3, u);
    const Matrix k3x = fx * (I + 0.5 * h * k2x);
    const Matrix k3u = fx * (0.5 * h * k2u) + m.dfdu(x3, u);

    const Vector x4 = x + h * k3;
    const Vector k4 = m.f(x4, u);
    check_finite_stage(k4, 4);
    fx = m.dfdx(x4, u);
    const Matrix k4x = fx * (I + h * k3x);
    const Matrix k4u = fx * (h * k3u) + m.dfdu(x4, u);

    DiscreteStepResult r;
    r.x_next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    r.A = I + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    r.B = h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    if (!r.x_next.allFinite()) throw IntegrationError("non-finite state after RK4 step", 4);
    return r;
}

// Two-stage Gauss-Legendre collocation (order 4).
struct GaussLegendre2 {
    static constexpr double s3 = 1.7320508075688772935; // sqrt(3)
    static constexpr double a11 = 0.25;
    static constexpr double a12 = 0.25 - s3 / 6.0;
    static constexpr double a21 = 0.25 + s3 / 6.0;
    static constexpr double a22 = 0.25;
    static constexpr double b1 = 0.5;
    static constexpr double b2 = 0.5;
};

inline DiscreteStepResult irk_gl4_substep(const Model& m, const Vector& x, const Vector& u,
                                          double h, int newton_iters, bool jacobian_reuse)
{
    using T = GaussLegendre2;
    const int nx = m.nx();
    const int nu = m.nu();
    const double a[2][2] = {{T::a11, T::a12}, {T::a21, T::a22}};

    // Stage slopes K = (K1, K2), initialized with the explicit slope.
    Vector K(2 * nx);
    const Vector f0 = m.f(x, u);
    check_finite_stage(f0, 0);
    K << f0, f0;

    auto stage_state = [&](const Vector& K, int i) -> Vector {
        return x + h * (a[i][0] * K.head(nx) + a[i][1] * K.tail(nx));
    };
    auto residual = [&](const Vector& K) -> Vector {
        Vector r(2 * nx);
        for (int i = 0; i < 2; ++i) {
            r.segment(i * nx, nx) = K.segment(i * nx, nx) - m.f(stage_state(K, i), u);
        }
        return r;
    };
    auto stage_jacobian = [&](const Vector& K) -> Matrix {
        Matrix J = Matrix::Identity(2 * nx, 2 * nx);
        for (int i = 0; i < 2; ++i) {
            const Matrix fx = m.dfdx(stage_state(K, i), u);
            for (int j = 0; j < 2; ++j) {
                J.block(i * nx, j * nx, nx, nx) -= h * a[i][j] * fx;
            }
        }
        return J;
    };
    auto factorize = [&](const Matrix& J) {
        Eigen::PartialPivLU<Matrix> lu(J);
        // PartialPivLU does not report singularity; check the pivots instead.
        const double max_piv = lu.matrixLU().diagonal().cwiseAbs().maxCoeff();
        const double min_piv = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
        if (!(min_piv > 1e-14 * std::max(1.0, max_piv))) {
            throw IntegrationError("singular IRK stage Jacobian");
        }
        return lu;
    };

    Eigen::PartialPivLU<Matrix> lu = factorize(stage_jacobian(K));
    Vector r = residual(K);
    for (int it = 0; it < newton_iters; ++it) {
        if (!r.allFinite()) throw IntegrationError("non-finite IRK residual", it);
        if (it > 0 && !jacobian_reuse) lu = factorize(stage_jacobian(K));
        K -= lu.solve(r);
        r = residual(K);
    }
    if (!r.allFinite() || !K.allFinite()) {
        throw IntegrationError("non-finite IRK residual", newton_iters);
    }

    // Sensitivities by the implicit function theorem at the last iterate:
    //   dR/dK dK/dp = -dR/dp,   dR_i/dx = -f_x(X_i),   dR_i/du = -f_u(X_i)
    Matrix rhs_x(2 * nx, nx);
    Matrix rhs_u(2 * nx, nu);
    Matrix Jk = Matrix::Identity(2 * nx, 2 * nx);
    for (int i = 0; i < 2; ++i) {
        const Vector Xi = stage_state(K, i);
        const Matrix fx = m.dfdx(Xi, u);
        rhs_x.block(i * nx, 0, nx, nx) = fx;
        rhs_u.block(i * nx, 0, nx, nu) = m.dfdu(Xi, u);
        for (int j = 0; j < 2; ++j) Jk.block(i * nx, j * nx, nx, nx) -= h * a[i][j] * fx;
    }
    const Eigen::PartialPivLU<Matrix> lu_exact = factorize(Jk);
    const Matrix dK_dx = lu_exact.solve(rhs_x);
    const Matrix dK_du = lu_exact.solve(rhs_u);

    DiscreteStepResult res;
    res.x_next = x + h * (T::b1 * K.head(nx) + T::b2 * K.tail(nx));
    res.A = Matrix::Identity(nx, nx) + h * (T::b1 * dK_dx.topRows(nx) + T::b2 * dK_dx.bottomRows(nx));
    res.B = h * (T::b1 * dK_du.topRows(nx) + T::b2 * dK_du.bottomRows(nx));
    res.newton_residual = r.lpNorm<Eigen::Infinity>();
    if (!res.x_next.allFinite()) throw IntegrationError("non-finite state after IRK step");
    return res;
}

template <typename Substep>
DiscreteStepResult chain_substeps(const Vector& x, const IntegratorConfig& cfg, Substep&& substep)
{
    const double h = cfg.step_size / cfg.num_steps;
    DiscreteStepResult acc = substep(x, h);
    for (int s = 1; s < cfg.num_steps; ++s) {
        DiscreteStepResult next = substep(acc.x_next, h);
        acc.B = next.A * acc.B + next.B;
        acc.A = next.A * acc.A;
        acc.x_next = std::move(next.x_next);
        acc.newton_residual = std::max(acc.newton_residual, next.newton_residual);
    }
    return acc;
}

} // namespace detail

/// Classical explicit RK4 over one shooting interval (cfg.num_steps sub-steps).
inline DiscreteStepResult erk4_step(const Model& model, const Vector& x, const Vector& u,
                                    const IntegratorConfig& cfg)
{
    if (cfg.scheme != IntegratorScheme::ERK4) throw ConfigError("erk4_step: scheme is not ERK4");
    cfg.validate();
    check_model_args(model, x, u);
    return detail::chain_substeps(x, cfg, [&](const Vector& xs, double h) {
        return detail::erk4_substep(model, xs, u, h);
    });
}

/// Gauss-Legendre IRK of order four, fixed number of Newton iterations.
inline DiscreteStepResult irk_gl4_step(const Model& model, const Vector& x, const Vector& u,
                                       const IntegratorConfig& cfg)
{
    if (cfg.scheme != IntegratorScheme::IRK_GL4) {
        throw ConfigError("irk_gl4_step: scheme is not IRK_GL4");
    }
    cfg.validate();
    check_model_args(model, x, u);
    return detail::chain_substeps(x, cfg, [&](const Vector& xs, double h) {
        return detail::irk_gl4_substep(model, xs, u, h, cfg.newton_iters, cfg.jacobian_reuse);
    });
}

inline DiscreteStepResult integrate(const Model& model, const Vector& x, const Vector& u,
                                    const IntegratorConfig& cfg)
{
    return cfg.scheme == IntegratorScheme::ERK4 ? erk4_step(model, x, u, cfg)
                                                : irk_gl4_step(model, x, u, cfg);
}

} // namespace zoro

#endif // ZORO_INTEGRATOR_HPP
