#include "oracles.hpp"

#include "zoro/scenarios.hpp"
#include "zoro/sqp_rti.hpp"

#include <catch_amalgamated.hpp>

using namespace zoro;

namespace {

IntegratorConfig gl4_exact()
{
    return {IntegratorScheme::IRK_GL4, 0.1, 1, false, 1};
}

struct RandomLti {
    Matrix A, B, Q, R, QN;
};

RandomLti random_lti(std::mt19937_64& rng, int nx, int nu)
{
    RandomLti s;
    s.A = oracle::random_matrix(rng, nx, nx);
    s.B = oracle::random_matrix(rng, nx, nu);
    s.Q = oracle::random_psd(rng, nx) + 0.1 * Matrix::Identity(nx, nx);
    s.R = oracle::random_psd(rng, nu) + 0.1 * Matrix::Identity(nu, nu);
    s.QN = oracle::random_psd(rng, nx) + 0.1 * Matrix::Identity(nx, nx);
    return s;
}

// Sparse (non-condensed) Gauss-Newton QP assembled directly from the OCP data at the
// solver iterate and solved through its full KKT system (no inequality rows).
Vector sparse_kkt_controls(const OcpSpec& sp, const Iterate& it, const Vector& x0_bar)
{
    const int N = sp.N, nx = sp.nx(), nu = sp.nu();
    const int nX = (N + 1) * nx, nU = N * nu, nv = nX + nU, ne = (N + 1) * nx;
    Matrix K = Matrix::Zero(nv + ne, nv + ne);
    Vector rhs = Vector::Zero(nv + ne);
    auto xi = [&](int k) { return k * nx; };
    auto ui = [&](int k) { return nX + k * nu; };
    const auto& c = sp.cost;
    for (int k = 0; k < N; ++k) {
        const Vector res = c.Vx * it.x[k] + c.Vu * it.u[k] - c.y_ref[k];
        K.block(xi(k), xi(k), nx, nx) += c.Vx.transpose() * c.W * c.Vx;
        K.block(ui(k), ui(k), nu, nu) += c.Vu.transpose() * c.W * c.Vu;
        K.block(ui(k), xi(k), nu, nx) += c.Vu.transpose() * c.W * c.Vx;
        K.block(xi(k), ui(k), nx, nu) += c.Vx.transpose() * c.W * c.Vu;
        rhs.segment(xi(k), nx) -= c.Vx.transpose() * c.W * res;
        rhs.segment(ui(k), nu) -= c.Vu.transpose() * c.W * res;
    }
    const Vector resN = c.Vx_N * it.x[N] - c.y_ref_N;
    K.block(xi(N), xi(N), nx, nx) += c.Vx_N.transpose() * c.W_N * c.Vx_N;
    rhs.segment(xi(N), nx) -= c.Vx_N.transpose() * c.W_N * resN;

    // dx_0 = e ; dx_{k+1} - A dx_k - B du_k = psi(x_k, u_k) - x_{k+1}
    auto add_eq = [&](int row, int col, const Matrix& blk) {
        K.block(nv + row, col, blk.rows(), blk.cols()) += blk;
        K.block(col, nv + row, blk.cols(), blk.rows()) += blk.transpose();
    };
    add_eq(0, xi(0), Matrix::Identity(nx, nx));
    rhs.segment(nv, nx) = x0_bar - it.x[0];
    for (int k = 0; k < N; ++k) {
        const auto step = integrate(*sp.model, it.x[k], it.u[k], sp.integrator);
        const int row = (k + 1) * nx;
        add_eq(row, xi(k + 1), Matrix::Identity(nx, nx));
        add_eq(row, xi(k), -step.A);
        add_eq(row, ui(k), -step.B);
        rhs.segment(nv + row, nx) = step.x_next - it.x[k + 1];
    }
    const Vector sol = K.fullPivLu().solve(rhs);
    return sol.segment(nX, nU);
}

Iterate random_iterate(std::mt19937_64& rng, const OcpSpec& sp, double scale = 1.0)
{
    Iterate it = Iterate::zeros(sp);
    for (auto& x : it.x) x = oracle::random_vector(rng, sp.nx(), scale);
    for (auto& u : it.u) u = oracle::random_vector(rng, sp.nu(), scale);
    return it;
}

} // namespace

TEST_CASE("prepared sensitivities of an LTI model are its GL4 discretization")
{
    std::mt19937_64 rng(3);
    const RandomLti m = random_lti(rng, 3, 2);
    auto spec = std::make_shared<const OcpSpec>(build_lq_ocp(m.A, m.B, m.Q, m.R, m.QN, 5, 0.5, gl4_exact()));
    SqpSolver solver(spec);
    solver.set_iterate(random_iterate(rng, *spec));
    solver.prepare();
    const auto [Ad, Bd] = oracle::pade22_discretization(m.A, m.B, 0.1);
    for (int k = 0; k < spec->N; ++k) {
        CHECK((solver.iterate().cache[k].A - Ad).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((solver.iterate().cache[k].B - Bd).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("zero dynamics prepare the identity")
{
    auto spec = std::make_shared<const OcpSpec>(build_lq_ocp(Matrix::Zero(2, 2), Matrix::Zero(2, 1),
        Matrix::Identity(2, 2), Matrix::Identity(1, 1), Matrix::Identity(2, 2), 4, 0.4));
    SqpSolver solver(spec);
    solver.prepare();
    for (int k = 0; k < 4; ++k) {
        CHECK(solver.iterate().cache[k].A == Matrix::Identity(2, 2));
        CHECK(solver.iterate().cache[k].B.isZero(0.0));
    }
}

TEST_CASE("preparation is deterministic")
{
    auto spec = std::make_shared<const OcpSpec>(build_diff_drive_ocp(DiffDriveScenario{}));
    std::mt19937_64 rng(4);
    const Iterate it = random_iterate(rng, *spec, 0.5);
    SqpSolver a(spec), b(spec);
    a.set_iterate(it);
    b.set_iterate(it);
    a.prepare();
    b.prepare();
    a.prepare(); // repeated preparation at the same point
    CHECK(a.workspace().H == b.workspace().H);
    CHECK(a.workspace().C == b.workspace().C);
    CHECK(a.workspace().d0 == b.workspace().d0);
    CHECK(a.workspace().g0 == b.workspace().g0);
    for (int k = 0; k <= spec->N; ++k) {
        CHECK(a.iterate().cache[k].h == b.iterate().cache[k].h);
        CHECK(a.iterate().cache[k].dh == b.iterate().cache[k].dh);
    }
}

TEST_CASE("first control of the unconstrained LQ problem equals the Riccati feedback")
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const RandomLti m = random_lti(rng, 4, 2);
        const Matrix A = 0.3 * m.A;
        auto spec = std::make_shared<const OcpSpec>(build_lq_ocp(A, m.B, m.Q, m.R, m.QN, 10, 1.0, gl4_exact()));
        const auto [Ad, Bd] = oracle::pade22_discretization(A, m.B, 0.1);
        const Matrix K0 = oracle::riccati_first_gain(Ad, Bd, m.Q, m.R, m.QN, 10);
        const Vector x0 = oracle::random_vector(rng, 4);
        SqpSolver solver(spec);
        const FeedbackResult fr = solver.step(x0);
        REQUIRE(fr.applied);
        CHECK((fr.u0 - K0 * x0).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("split preparation and feedback reproduce the atomic step")
{
    auto spec = std::make_shared<const OcpSpec>(build_diff_drive_ocp(DiffDriveScenario{}));
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        Iterate it = Iterate::zeros(*spec);
        for (int k = 0; k <= spec->N; ++k) it.x[k][DiffDriveModel::kPx] = 0.05 * k;
        const Vector x0 = it.x[0] + oracle::random_vector(rng, 5, 0.05);
        SqpSolver atomic(spec), split(spec);
        atomic.set_iterate(it);
        split.set_iterate(it);
        const FeedbackResult a = atomic.step(x0);
        split.prepare();
        // the state arrives only after preparation
        const FeedbackResult b = split.feedback(x0);
        INFO(to_string(a.qp.status));
        REQUIRE(a.applied);
        REQUIRE(b.applied);
        CHECK((a.u0 - b.u0).cwiseAbs().maxCoeff() <= 1e-14);
        for (int k = 0; k <= spec->N; ++k) {
            CHECK((atomic.iterate().x[k] - split.iterate().x[k]).cwiseAbs().maxCoeff() <= 1e-14);
        }
    }
}

TEST_CASE("condensed QP agrees with the sparse KKT system")
{
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const RandomLti m = random_lti(rng, 2, 1);
        auto spec = std::make_shared<const OcpSpec>(build_lq_ocp(m.A, m.B, m.Q, m.R, m.QN, 3, 0.3, gl4_exact()));
        SqpSolver solver(spec);
        // inconsistent trajectory: the defects enter through the affine terms
        const Iterate it = random_iterate(rng, *spec);
        solver.set_iterate(it);
        solver.prepare();
        const Vector x0 = oracle::random_vector(rng, 2);
        const DenseQp qp = solver.condense(x0);
        const Vector z = qp.H.ldlt().solve(-qp.g);
        const Vector z_sparse = sparse_kkt_controls(*spec, it, x0);
        CHECK((z - z_sparse).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("condensed constraint rows equal the forward-simulated linearization")
{
    auto spec = std::make_shared<const OcpSpec>(build_diff_drive_ocp(DiffDriveScenario{}));
    std::mt19937_64 rng(41);
    const OcpSpec& sp = *spec;
    SqpSolver solver(spec);
    Iterate it = random_iterate(rng, sp, 0.3);
    for (int k = 0; k <= sp.N; ++k) it.x[k][DiffDriveModel::kPx] += 0.3 * k;
    solver.set_iterate(it);
    solver.prepare();
    const Vector x0 = it.x[0] + oracle::random_vector(rng, 5, 0.1);
    const DenseQp qp = solver.condense(x0);
    for (int trial = 0; trial < 5; ++trial) {
        const Vector z = oracle::random_vector(rng, sp.N * sp.nu(), 0.2);
        // forward simulation of the linearized dynamics
        std::vector<Vector> dx(sp.N + 1);
        dx[0] = x0 - it.x[0];
        for (int k = 0; k < sp.N; ++k) {
            const auto s = integrate(*sp.model, it.x[k], it.u[k], sp.integrator);
            dx[k + 1] = s.A * dx[k] + s.B * z.segment(k * sp.nu(), sp.nu()) + s.x_next - it.x[k + 1];
        }
        const Vector lhs = qp.C * z + qp.d;
        const auto& rows = solver.workspace().rows;
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const int k = rows[j].node;
            const Vector u = k < sp.N ? it.u[k] : Vector::Zero(sp.nu());
            const ConstraintEval ce = eval_constraints(sp, k, it.x[k], u);
            Vector dxu(7);
            dxu << dx[k], (k < sp.N ? Vector(z.segment(k * sp.nu(), sp.nu())) : Vector::Zero(2));
            const double expected = ce.values[rows[j].row] + ce.gradient.row(rows[j].row).dot(dxu);
            CHECK(std::abs(lhs[static_cast<Index>(j)] - expected) <= 1e-10);
        }
    }
}

TEST_CASE("scalar single-stage problem in closed form")
{
    // x+ = x + h u (integrator with B = 1), cost 0.5 (q x^2 + r u^2) + 0.5 qN x1^2
    const double q = 2.0, r = 0.5, qN = 3.0, h = 0.2;
    auto spec = std::make_shared<const OcpSpec>(build_lq_ocp(Matrix::Zero(1, 1), Matrix::Ones(1, 1),
        Matrix::Constant(1, 1, q), Matrix::Constant(1, 1, r), Matrix::Constant(1, 1, qN), 1, h, gl4_exact()));
    SqpSolver solver(spec);
    const Vector x0 = Vector::Constant(1, 1.5);
    const FeedbackResult fr = solver.step(x0);
    // d/du [ r u^2 + qN (x0 + h u)^2 ] = 0
    const double u_star = -qN * h * x0[0] / (r + qN * h * h);
    CHECK(fr.u0[0] == Catch::Approx(u_star).margin(1e-12));
    CHECK_FALSE(solver.workspace().valid);
}

TEST_CASE("zero dynamics give a block-diagonal condensed Hessian")
{
    std::mt19937_64 rng(9);
    const Matrix R = oracle::random_psd(rng, 2) + Matrix::Identity(2, 2);
    auto spec = std::make_shared<const OcpSpec>(build_lq_ocp(Matrix::Zero(3, 3), Matrix::Zero(3, 2),
        Matrix::Identity(3, 3), R, Matrix::Identity(3, 3), 4, 0.4));
    SqpSolver solver(spec);
    solver.prepare();
    const Matrix& H = solver.workspace().H;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const Matrix blk = H.block(2 * i, 2 * j, 2, 2);
            if (i == j) CHECK((blk - R).cwiseAbs().maxCoeff() <= 1e-14);
            else CHECK(blk.isZero(0.0));
        }
}

TEST_CASE("nominal differential drive problem converges")
{
    DiffDriveScenario sc;
    auto spec = std::make_shared<const OcpSpec>(build_diff_drive_ocp(sc));
    SqpSettings settings;
    settings.record_history = true;
    const Iterate guess = Iterate::constant(*spec, sc.x0, Vector::Zero(2));
    const SqpResult res = sqp_solve(spec, guess, settings);
    REQUIRE(res.status == SqpStatus::Converged);
    CHECK(res.iterations <= 50);

    // condensed Hessian positive semidefinite at every iterate
    SqpSolver probe(spec, settings);
    probe.set_iterate(res.iterate);
    probe.prepare();
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(probe.workspace().H).eigenvalues().minCoeff() >= -1e-10);
    CHECK(probe.workspace().max_defect <= settings.tol_equality);

    // nonlinear constraints hold at the solution
    for (int k = 0; k <= spec->N; ++k) {
        const Vector u = k < spec->N ? res.iterate.u[k] : Vector::Zero(2);
        CHECK(eval_constraints(*spec, k, res.iterate.x[k], u).values.maxCoeff() <= 1e-8);
    }

    // restarting at the solution takes one step
    SqpSolver again(spec, settings);
    again.set_iterate(res.iterate);
    const SqpResult warm = again.solve(sc.x0);
    CHECK(warm.status == SqpStatus::Converged);
    CHECK(warm.iterations == 1);
}

TEST_CASE("shift moves the trajectory by one node")
{
    auto spec = std::make_shared<const OcpSpec>(build_diff_drive_ocp(DiffDriveScenario{}));
    std::mt19937_64 rng(2);
    SqpSolver solver(spec);
    const Iterate it = random_iterate(rng, *spec);
    solver.set_iterate(it);
    solver.shift();
    const int N = spec->N;
    for (int k = 0; k < N; ++k) CHECK(solver.iterate().x[k] == it.x[k + 1]);
    CHECK(solver.iterate().x[N] == it.x[N]);
    for (int k = 0; k + 1 < N; ++k) CHECK(solver.iterate().u[k] == it.u[k + 1]);
    CHECK(solver.iterate().u[N - 1] == it.u[N - 1]);
}

TEST_CASE("feedback before preparation is an error")
{
    auto spec = std::make_shared<const OcpSpec>(build_diff_drive_ocp(DiffDriveScenario{}));
    SqpSolver solver(spec);
    CHECK_THROWS_AS(solver.feedback(Vector::Zero(5)), ConfigError);
    solver.prepare();
    CHECK_THROWS_AS(solver.feedback(Vector::Zero(4)), ConfigError);
    SqpSettings bad;
    bad.max_iter = 0;
    CHECK_THROWS_AS(SqpSolver(spec, bad), ConfigError);
}
