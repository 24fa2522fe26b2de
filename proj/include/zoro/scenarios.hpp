#ifndef ZORO_SCENARIOS_HPP
#define ZORO_SCENARIOS_HPP

#include "zoro/ocp.hpp"
#include "zoro/zoro.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace zoro {

/// Row r_total - |p - q| <= 0 keeping the point (x[ix], x[iy]) outside a disc around q.
/// Below a distance of 1e-9 the gradient is undefined and returned as zero.
inline NonlinearRow collision_row(int ix, int iy, Eigen::Vector2d q, double r_total, std::string label)
{
    NonlinearRow row;
    row.label = std::move(label);
    row.depends_on_control = false;
    row.value = [=](const Vector& x, const Vector&) {
        const double dist = std::hypot(x[ix] - q.x(), x[iy] - q.y());
        return r_total - dist;
    };
    row.gradient = [=](const Vector& x, const Vector& u) {
        RowVector g = RowVector::Zero(x.size() + u.size());
        const double dx = x[ix] - q.x();
        const double dy = x[iy] - q.y();
        const double dist = std::hypot(dx, dy);
        if (dist < 1e-9) return g;
        g[ix] = -dx / dist;
        g[iy] = -dy / dist;
        return g;
    };
    return row;
}

// ---------------------------------------------------------------------------
// Differential drive scenario
// ---------------------------------------------------------------------------

struct Obstacle {
    double qx = 0.0;
    double qy = 0.0;
    double r = 0.0;
};

/// Scenario inputs of the differential drive OCP. The numeric bounds, weights,
/// reference and obstacle layout are implementation defaults.
struct DiffDriveScenario {
    int N = 20;
    double T = 2.0;
    double robot_radius = 0.15;
    std::vector<Obstacle> obstacles{{1.8, 0.3, 0.2}, {3.4, -0.3, 0.25}, {5.0, 0.3, 0.2}};

    double v_min = -0.2, v_max = 1.0;
    double omega_max = 1.0;
    double a_max = 2.0;
    double alpha_max = 4.0;
    double terminal_velocity_bound = 1e-3;

    Vector x0 = Vector::Zero(5);
    std::vector<Eigen::Vector2d> waypoints{{0.0, 0.0}, {7.0, 0.0}};
    double v_ref = 0.6;

    /// Stage output weights for (p_x, p_y, v, omega, a, alpha).
    Vector stage_weights = (Vector(6) << 2.0, 2.0, 0.05, 0.05, 0.2, 0.2).finished();
    /// Terminal output weights for (p_x, p_y).
    Vector terminal_weights = (Vector(2) << 5.0, 5.0).finished();

    IntegratorConfig integrator{IntegratorScheme::IRK_GL4, 0.1, 3, true, 1};

    /// Process noise covariance diagonal, also the initial uncertainty.
    Vector noise_diag = (Vector(5) << 2e-6, 2e-6, 4e-6, 1.5e-3, 7e-3).finished();
    double gamma = 3.0;
    /// Ancillary feedback a = k_v v, alpha = k_omega omega.
    double k_v = -5.0;
    double k_omega = -5.0;
};

/// Point on the waypoint polyline at arc length v_ref * t, clamped at the last waypoint.
inline Eigen::Vector2d reference_position(const DiffDriveScenario& sc, double t)
{
    if (sc.waypoints.empty()) return Eigen::Vector2d::Zero();
    double s = std::max(0.0, sc.v_ref * t);
    for (std::size_t i = 0; i + 1 < sc.waypoints.size(); ++i) {
        const Eigen::Vector2d seg = sc.waypoints[i + 1] - sc.waypoints[i];
        const double len = seg.norm();
        if (s <= len && len > 0.0) return sc.waypoints[i] + seg * (s / len);
        s -= len;
    }
    return sc.waypoints.back();
}

struct Reference {
    std::vector<Vector> stage;
    Vector terminal;
};

/// Stage/terminal output references for a horizon starting at time t0.
inline Reference diff_drive_reference(const DiffDriveScenario& sc, double t0)
{
    Reference ref;
    const double dt = sc.T / sc.N;
    for (int k = 0; k < sc.N; ++k) {
        const double t = t0 + k * dt;
        const Eigen::Vector2d p = reference_position(sc, t);
        const bool moving = (reference_position(sc, t + dt) - p).norm() > 1e-12;
        Vector y = Vector::Zero(6);
        y << p.x(), p.y(), moving ? sc.v_ref : 0.0, 0.0, 0.0, 0.0;
        ref.stage.push_back(y);
    }
    const Eigen::Vector2d pN = reference_position(sc, t0 + sc.T);
    ref.terminal = (Vector(2) << pN.x(), pN.y()).finished();
    return ref;
}

/// Row layout of the differential drive stage constraints (normalized order).
struct DiffDriveRows {
    static constexpr int ub_v = 0, lb_v = 1, ub_omega = 2, lb_omega = 3;
    static constexpr int ub_a = 4, lb_a = 5, ub_alpha = 6, lb_alpha = 7;
    static constexpr int first_obstacle = 8;
};

class ScenarioError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

inline OcpSpec build_diff_drive_ocp(const DiffDriveScenario& sc)
{
    using S = DiffDriveModel;
    if (sc.x0.size() != 5) throw ScenarioError("scenario: x0 must have 5 entries");
    if (!(sc.robot_radius >= 0.0)) throw ScenarioError("scenario: robot radius must be >= 0");
    for (std::size_t i = 0; i < sc.obstacles.size(); ++i) {
        const auto& o = sc.obstacles[i];
        if (!(o.r >= 0.0)) throw ScenarioError("scenario: obstacle radius must be >= 0");
        const double dist = std::hypot(sc.x0[S::kPx] - o.qx, sc.x0[S::kPy] - o.qy);
        if (dist <= sc.robot_radius + o.r) {
            throw ScenarioError("scenario: obstacle " + std::to_string(i)
                                + " overlaps the robot at the initial state");
        }
    }
    if (sc.stage_weights.size() != 6) throw ScenarioError("scenario: stage_weights needs 6 entries");
    if (sc.terminal_weights.size() != 2) throw ScenarioError("scenario: terminal_weights needs 2 entries");

    OcpSpec spec;
    spec.N = sc.N;
    spec.T = sc.T;
    spec.model = std::make_shared<DiffDriveModel>();
    spec.integrator = sc.integrator;

    auto& c = spec.cost;
    c.Vx = Matrix::Zero(6, 5);
    c.Vu = Matrix::Zero(6, 2);
    c.Vx(0, S::kPx) = 1.0;
    c.Vx(1, S::kPy) = 1.0;
    c.Vx(2, S::kV) = 1.0;
    c.Vx(3, S::kOmega) = 1.0;
    c.Vu(4, S::kAcc) = 1.0;
    c.Vu(5, S::kAngAcc) = 1.0;
    c.W = sc.stage_weights.asDiagonal();
    c.Vx_N = Matrix::Zero(2, 5);
    c.Vx_N(0, S::kPx) = 1.0;
    c.Vx_N(1, S::kPy) = 1.0;
    c.W_N = sc.terminal_weights.asDiagonal();
    const Reference ref = diff_drive_reference(sc, 0.0);
    c.y_ref = ref.stage;
    c.y_ref_N = ref.terminal;

    auto& st = spec.stage_constraints;
    st.state_bounds = {{S::kV, sc.v_min, sc.v_max, "v"}, {S::kOmega, -sc.omega_max, sc.omega_max, "omega"}};
    st.control_bounds = {{S::kAcc, -sc.a_max, sc.a_max, "a"},
                         {S::kAngAcc, -sc.alpha_max, sc.alpha_max, "alpha"}};
    for (std::size_t i = 0; i < sc.obstacles.size(); ++i) {
        const auto& o = sc.obstacles[i];
        st.nonlinear.push_back(collision_row(S::kPx, S::kPy, {o.qx, o.qy}, sc.robot_radius + o.r,
                                             "obstacle_" + std::to_string(i)));
    }
    const double tv = sc.terminal_velocity_bound;
    spec.terminal_constraints.state_bounds = {{S::kV, -tv, tv, "v"}, {S::kOmega, -tv, tv, "omega"}};

    using R = DiffDriveRows;
    std::vector<int> tight = {R::ub_v, R::lb_v, R::ub_omega};
    for (std::size_t i = 0; i < sc.obstacles.size(); ++i) {
        tight.push_back(R::first_obstacle + static_cast<int>(i));
    }
    // x_0 is fixed by the measurement, so node 0 carries no tightened row
    spec.tighten_idx_0 = {};
    spec.tighten_idx_mid = tight;
    spec.tighten_idx_N = {};

    spec.finalize();
    return spec;
}

inline ZoroConfig diff_drive_zoro_config(const DiffDriveScenario& sc)
{
    using S = DiffDriveModel;
    if (sc.noise_diag.size() != 5) throw ScenarioError("scenario: noise_diag needs 5 entries");
    ZoroConfig cfg;
    cfg.W = sc.noise_diag.asDiagonal();
    cfg.P0_bar = cfg.W;
    cfg.G = Matrix::Identity(5, 5);
    cfg.K = Matrix::Zero(2, 5);
    cfg.K(S::kAcc, S::kV) = sc.k_v;
    cfg.K(S::kAngAcc, S::kOmega) = sc.k_omega;
    cfg.gamma = sc.gamma;
    return cfg;
}

// ---------------------------------------------------------------------------
// Hanging chain OCP used for the propagation-cost scaling study.
// ---------------------------------------------------------------------------

struct ChainScenario {
    int n_mass = 4;
    int N = 20;
    double T = 4.0;
    ChainParameters params{};
    Eigen::Vector3d end_reference{0.5, 0.0, 0.0};
    Eigen::Vector3d end_initial{0.4, 0.15, 0.0};
    double wall_y = -0.05; ///< lower bound on the y coordinate of every non-anchored mass
    double u_max = 1.0;
    IntegratorConfig integrator{IntegratorScheme::IRK_GL4, 0.2, 3, true, 1};
};

inline OcpSpec build_chain_ocp(const ChainScenario& sc)
{
    auto model = std::make_shared<HangingChainModel>(sc.n_mass, sc.params);
    const int nx = model->nx();
    const int nu = model->nu();

    OcpSpec spec;
    spec.N = sc.N;
    spec.T = sc.T;
    spec.model = model;
    spec.integrator = sc.integrator;

    const Vector x_ref = model->straight_state(sc.end_reference);
    Vector wx = Vector::Constant(nx, 25.0);
    for (int i = 0; i < model->n_free(); ++i) wx.segment<3>(model->vel_index(i)).setConstant(1.0);
    auto& c = spec.cost;
    c.Vx = Matrix::Zero(nx + nu, nx);
    c.Vx.topRows(nx).setIdentity();
    c.Vu = Matrix::Zero(nx + nu, nu);
    c.Vu.bottomRows(nu).setIdentity();
    Vector w(nx + nu);
    w << wx, Vector::Constant(nu, 0.1);
    c.W = w.asDiagonal();
    Vector y_ref(nx + nu);
    y_ref << x_ref, Vector::Zero(nu);
    c.y_ref.assign(sc.N, y_ref);
    c.Vx_N = Matrix::Identity(nx, nx);
    c.W_N = wx.asDiagonal();
    c.y_ref_N = x_ref;

    std::vector<int> tight;
    auto add_wall = [&](ConstraintSet& set, int idx, const std::string& name) {
        set.state_bounds.push_back({idx + 1, sc.wall_y, kInf, name});
    };
    for (int i = 0; i < model->n_free(); ++i) {
        add_wall(spec.stage_constraints, model->pos_index(i), "y_mass" + std::to_string(i + 1));
        add_wall(spec.terminal_constraints, model->pos_index(i), "y_mass" + std::to_string(i + 1));
        tight.push_back(i);
    }
    add_wall(spec.stage_constraints, model->end_index(), "y_end");
    add_wall(spec.terminal_constraints, model->end_index(), "y_end");
    tight.push_back(model->n_free());
    for (int j = 0; j < nu; ++j) {
        spec.stage_constraints.control_bounds.push_back({j, -sc.u_max, sc.u_max, {}});
    }
    spec.tighten_idx_0 = {};
    spec.tighten_idx_mid = tight;
    spec.tighten_idx_N = tight;
    spec.finalize();
    return spec;
}

inline Vector chain_initial_state(const ChainScenario& sc)
{
    return HangingChainModel(sc.n_mass, sc.params).straight_state(sc.end_initial);
}

/// Disturbance on the free-mass velocities, no ancillary feedback.
inline ZoroConfig chain_zoro_config(const ChainScenario& sc, double velocity_noise = 1e-4)
{
    const HangingChainModel m(sc.n_mass, sc.params);
    Vector w = Vector::Constant(m.nx(), 1e-8);
    for (int i = 0; i < m.n_free(); ++i) w.segment<3>(m.vel_index(i)).setConstant(velocity_noise);
    ZoroConfig cfg;
    cfg.W = w.asDiagonal();
    cfg.P0_bar = cfg.W;
    cfg.G = Matrix::Identity(m.nx(), m.nx());
    cfg.K = Matrix::Zero(m.nu(), m.nx());
    cfg.gamma = 1.0;
    return cfg;
}

// ---------------------------------------------------------------------------
// Linear-quadratic OCP: x' = A x + B u, stage cost 0.5 (x'Qx + u'Ru), terminal 0.5 x'Q_N x.
// ---------------------------------------------------------------------------

inline OcpSpec build_lq_ocp(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                            const Matrix& Q_N, int N, double T,
                            IntegratorConfig integ = {IntegratorScheme::IRK_GL4, 0.1, 1, false, 1})
{
    OcpSpec spec;
    spec.N = N;
    spec.T = T;
    spec.model = std::make_shared<LtiModel>(A, B);
    spec.integrator = integ;
    const Index nx = A.rows();
    const Index nu = B.cols();
    auto& c = spec.cost;
    c.Vx = Matrix::Zero(nx + nu, nx);
    c.Vx.topRows(nx).setIdentity();
    c.Vu = Matrix::Zero(nx + nu, nu);
    c.Vu.bottomRows(nu).setIdentity();
    c.W = Matrix::Zero(nx + nu, nx + nu);
    c.W.topLeftCorner(nx, nx) = Q;
    c.W.bottomRightCorner(nu, nu) = R;
    c.y_ref.assign(N, Vector::Zero(nx + nu));
    c.Vx_N = Matrix::Identity(nx, nx);
    c.W_N = Q_N;
    c.y_ref_N = Vector::Zero(nx);
    spec.finalize();
    return spec;
}

} // namespace zoro

#endif // ZORO_SCENARIOS_HPP
