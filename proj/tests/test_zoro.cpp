#include "oracles.hpp"

#include "zoro/scenarios.hpp"
#include "zoro/zoro.hpp"

#include <catch_amalgamated.hpp>

using namespace zoro;

namespace {

Matrix from_loops(const std::vector<double>& v, int n)
{
    Matrix M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = v[static_cast<std::size_t>(i * n + j)];
    return M;
}

double max_abs(const Matrix& M)
{
    return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

OcpPtr diff_drive()
{
    return std::make_shared<const OcpSpec>(build_diff_drive_ocp(DiffDriveScenario{}));
}

Iterate diff_drive_guess(const OcpSpec& spec)
{
    return Iterate::constant(spec, DiffDriveScenario{}.x0, Vector::Zero(2));
}

double ls_cost(const OcpSpec& sp, const Iterate& it)
{
    const auto& c = sp.cost;
    double J = 0.0;
    for (int k = 0; k < sp.N; ++k) {
        const Vector r = c.Vx * it.x[k] + c.Vu * it.u[k] - c.y_ref[k];
        J += 0.5 * r.dot(c.W * r);
    }
    const Vector rN = c.Vx_N * it.x[sp.N] - c.y_ref_N;
    return J + 0.5 * rN.dot(c.W_N * rN);
}

} // namespace

TEST_CASE("propagation examples")
{
    std::mt19937_64 rng(1);
    const Matrix P = oracle::random_psd(rng, 4);
    const Matrix I = Matrix::Identity(4, 4);
    CHECK(propagate_uncertainty(I, Matrix::Zero(4, 2), Matrix::Zero(2, 4), P, I, Matrix::Zero(4, 4)) == P);

    const Matrix W = oracle::random_psd(rng, 4);
    const Matrix Pn = propagate_uncertainty(oracle::random_matrix(rng, 4, 4), oracle::random_matrix(rng, 4, 2),
                                            oracle::random_matrix(rng, 2, 4), Matrix::Zero(4, 4), I, W);
    CHECK(max_abs(Pn - W) <= 1e-15);
}

TEST_CASE("propagation matches the element-wise oracle and preserves PSD")
{
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<int> dx(1, 8), du(1, 3), dw(1, 8);
    for (int trial = 0; trial < 1000; ++trial) {
        const int nx = dx(rng), nu = du(rng), nw = dw(rng);
        const Matrix A = oracle::random_matrix(rng, nx, nx);
        const Matrix B = oracle::random_matrix(rng, nx, nu);
        const Matrix K = oracle::random_matrix(rng, nu, nx);
        const Matrix G = oracle::random_matrix(rng, nx, nw);
        const Matrix P = oracle::random_psd(rng, nx);
        const Matrix W = oracle::random_psd(rng, nw);
        const Matrix Pn = propagate_uncertainty(A, B, K, P, G, W);
        const Matrix ref = from_loops(oracle::lyapunov_step_loops(A, B, K, P, G, W), nx);
        INFO("trial " << trial);
        CHECK(max_abs(Pn - ref) <= 1e-12 * std::max(1.0, max_abs(ref)));
        CHECK(max_abs(Pn - Pn.transpose()) == 0.0);
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(Pn).eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("backoff examples")
{
    const Matrix K = Matrix::Zero(1, 2);
    const RowVector e1 = (RowVector(3) << 1, 0, 0).finished();
    CHECK(compute_backoff(e1, K, Matrix::Zero(2, 2), 1.0) == 0.0);
    CHECK(compute_backoff(e1, K, Matrix::Identity(2, 2), 1.0) == 1.0);
    // the control gradient is mapped through K
    const Matrix K2 = (Matrix(1, 2) << 0.0, 2.0).finished();
    const RowVector eu = (RowVector(3) << 0, 0, 1).finished();
    CHECK(compute_backoff(eu, K2, Matrix::Identity(2, 2), 1.0) == Catch::Approx(2.0));
    // indefinite matrix beyond the clamp
    CHECK_THROWS_AS(compute_backoff(e1, K, -Matrix::Identity(2, 2), 1.0), NumericalError);
    CHECK(compute_backoff(e1, K, -1e-16 * Matrix::Identity(2, 2), 1.0) == 0.0);
}

TEST_CASE("backoff oracle, monotonicity and square-root scaling")
{
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> dx(1, 8), du(1, 3);
    std::uniform_real_distribution<double> dg(0.0, 4.0), ds(0.1, 10.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int nx = dx(rng), nu = du(rng);
        const Vector grad = oracle::random_vector(rng, nx + nu);
        const Matrix K = oracle::random_matrix(rng, nu, nx);
        const Matrix P = oracle::random_psd(rng, nx);
        const double gamma = dg(rng);
        const double beta = compute_backoff(grad.transpose(), K, P, gamma);
        const double ref = oracle::backoff_quadratic_form(grad, K, P, gamma);
        INFO("trial " << trial);
        CHECK(std::abs(beta - ref) <= 1e-12 * std::max(1.0, ref));

        const Matrix Pbig = P + oracle::random_psd(rng, nx, 1);
        CHECK(compute_backoff(grad.transpose(), K, Pbig, gamma) >= beta - 1e-12);

        const double s = ds(rng);
        const double scaled = compute_backoff(grad.transpose(), K, s * s * P, gamma);
        CHECK(std::abs(scaled - s * beta) <= 1e-12 * std::max(1.0, s * beta));
    }
}

TEST_CASE("collision-row backoff on the differential drive equals the quadratic form")
{
    const DiffDriveScenario sc;
    const OcpPtr spec = diff_drive();
    const ZoroConfig cfg = diff_drive_zoro_config(sc);
    SqpSolver solver(spec);
    Iterate it = diff_drive_guess(*spec);
    for (int k = 0; k <= spec->N; ++k) {
        it.x[k] << 0.08 * k, -0.02 * k, -0.1, 0.6, 0.05;
    }
    solver.set_iterate(it);
    solver.prepare();
    const TubeState tube = zoro_update(solver, cfg);
    for (int k = 0; k <= spec->N; ++k) {
        const NodeCache& nc = solver.iterate().cache[k];
        for (int i : cfg.tighten_idx(*spec, k)) {
            const Vector grad = nc.dh.row(i).transpose();
            CHECK(std::abs(tube.beta[k][i] - oracle::backoff_quadratic_form(grad, cfg.K, tube.P[k], cfg.gamma))
                  <= 1e-12);
        }
    }
    // an obstacle row far from every obstacle still receives a positive margin
    CHECK(tube.beta[10][DiffDriveRows::first_obstacle] > 0.0);
}

TEST_CASE("zero uncertainty leaves every bound untouched")
{
    const OcpPtr spec = diff_drive();
    SqpSolver solver(spec);
    solver.prepare();
    const auto before = solver.iterate().bound;
    const TubeState tube = zoro_update(solver, ZoroConfig::zero(5, 2));
    for (int k = 0; k <= spec->N; ++k) {
        CHECK(tube.P[k].isZero(0.0));
        CHECK(tube.beta[k].isZero(0.0));
        CHECK(solver.iterate().bound[k] == before[k]);
    }
}

TEST_CASE("LTI propagation follows the discrete Lyapunov recursion")
{
    std::mt19937_64 rng(5);
    const Matrix A = 0.5 * oracle::random_matrix(rng, 3, 3);
    const Matrix B = oracle::random_matrix(rng, 3, 1);
    OcpSpec sp = build_lq_ocp(A, B, Matrix::Identity(3, 3), Matrix::Identity(1, 1), Matrix::Identity(3, 3), 8, 0.8);
    sp.stage_constraints.state_bounds = {{0, -1.0, 1.0, "x0"}};
    sp.terminal_constraints.state_bounds = {{0, -1.0, 1.0, "x0"}};
    sp.tighten_idx_0 = sp.tighten_idx_mid = sp.tighten_idx_N = {0, 1};
    sp.finalize();
    auto spec = std::make_shared<const OcpSpec>(sp);

    ZoroConfig cfg;
    cfg.K = oracle::random_matrix(rng, 1, 3, 0.3);
    cfg.P0_bar = oracle::random_psd(rng, 3);
    cfg.W = oracle::random_psd(rng, 2);
    cfg.G = oracle::random_matrix(rng, 3, 2);
    cfg.gamma = 2.0;

    SqpSolver solver(spec);
    solver.prepare();
    const TubeState tube = zoro_update(solver, cfg);
    const auto [Ad, Bd] = oracle::pade22_discretization(A, B, 0.1);
    const Matrix Acl = Ad + Bd * cfg.K;
    const Matrix GWG = cfg.G * cfg.W * cfg.G.transpose();
    Matrix Apow = Matrix::Identity(3, 3);
    Matrix noise = Matrix::Zero(3, 3);
    for (int k = 0; k <= 8; ++k) {
        // P_k = Acl^k P0 Acl^k' + sum_{j<k} Acl^j GWG' Acl^j'
        const Matrix closed = Apow * cfg.P0_bar * Apow.transpose() + noise;
        CHECK(max_abs(tube.P[k] - closed) <= 1e-10);
        CHECK(tube.beta[k][0] == Catch::Approx(2.0 * std::sqrt(closed(0, 0))).epsilon(1e-10));
        CHECK(solver.iterate().bound[k][0] == -tube.beta[k][0]);
        noise = Acl * noise * Acl.transpose() + GWG;
        Apow = Acl * Apow;
    }
}

TEST_CASE("terminal velocity bounds are not tightened and updates replace")
{
    const DiffDriveScenario sc;
    const OcpPtr spec = diff_drive();
    const ZoroConfig cfg = diff_drive_zoro_config(sc);
    SqpSolver solver(spec);
    solver.set_iterate(diff_drive_guess(*spec));
    solver.prepare();
    const Vector terminal_before = solver.iterate().bound[spec->N];
    zoro_update(solver, cfg);
    CHECK(solver.iterate().bound[spec->N] == terminal_before);

    const auto once = solver.iterate().bound;
    zoro_update(solver, cfg);
    for (int k = 0; k <= spec->N; ++k) CHECK(solver.iterate().bound[k] == once[k]);

    // rows outside the tightening set keep the nominal bound
    for (int k = 0; k < spec->N; ++k) {
        CHECK(solver.iterate().bound[k][DiffDriveRows::lb_omega] == 0.0);
        CHECK(solver.iterate().bound[k][DiffDriveRows::ub_a] == 0.0);
    }
}

TEST_CASE("configuration errors")
{
    const OcpPtr spec = diff_drive();
    SqpSolver solver(spec);
    ZoroConfig cfg = ZoroConfig::zero(5, 2);
    CHECK_THROWS_AS(zoro_update(solver, cfg), ConfigError); // not prepared
    solver.prepare();
    cfg.K = Matrix::Zero(2, 4);
    CHECK_THROWS_AS(zoro_update(solver, cfg), ConfigError);
    cfg = ZoroConfig::zero(5, 2);
    cfg.W(0, 0) = -1.0;
    CHECK_THROWS_AS(cfg.validate(*spec), ConfigError);
    CHECK_THROWS_AS(zoro_sqp(solver, cfg, Vector::Zero(5)), ConfigError);
    cfg = ZoroConfig::zero(5, 2);
    cfg.gamma = -1.0;
    CHECK_THROWS_AS(zoro_update(solver, cfg), ConfigError);
    cfg = ZoroConfig::zero(5, 2);
    cfg.tighten_idx_mid = std::vector<int>{99};
    CHECK_THROWS_AS(zoro_update(solver, cfg), ConfigError);
}

TEST_CASE("zero uncertainty reproduces the nominal SQP iterates")
{
    const OcpPtr spec = diff_drive();
    SqpSettings settings;
    settings.record_history = true;
    const Iterate guess = diff_drive_guess(*spec);
    const SqpResult nominal = sqp_solve(spec, guess, settings);
    const ZoroSqpResult robust = zoro_sqp(spec, ZoroConfig::zero(5, 2), guess, settings);
    REQUIRE(nominal.status == SqpStatus::Converged);
    REQUIRE(robust.sqp.status == SqpStatus::Converged);
    REQUIRE(nominal.history.size() == robust.sqp.history.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < nominal.history.size(); ++i) {
        for (std::size_t k = 0; k < nominal.history[i].first.size(); ++k)
            worst = std::max(worst, max_abs(nominal.history[i].first[k] - robust.sqp.history[i].first[k]));
        for (std::size_t k = 0; k < nominal.history[i].second.size(); ++k)
            worst = std::max(worst, max_abs(nominal.history[i].second[k] - robust.sqp.history[i].second[k]));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("converged zoRO solution is feasible for its own backoffs")
{
    const DiffDriveScenario sc;
    const OcpPtr spec = diff_drive();
    const ZoroConfig cfg = diff_drive_zoro_config(sc);
    const ZoroSqpResult res = zoro_sqp(spec, cfg, diff_drive_guess(*spec));
    REQUIRE(res.sqp.status == SqpStatus::Converged);

    // recompute the tube from scratch at the solution
    const Iterate& it = res.sqp.iterate;
    Matrix P = cfg.P0_bar;
    double worst = -kInf;
    for (int k = 0; k <= spec->N; ++k) {
        const Vector u = k < spec->N ? it.u[k] : Vector::Zero(2);
        const ConstraintEval ce = eval_constraints(*spec, k, it.x[k], u);
        for (int i : spec->tighten_idx(k)) {
            const double beta = oracle::backoff_quadratic_form(ce.gradient.row(i).transpose(), cfg.K, P, cfg.gamma);
            worst = std::max(worst, ce.values[i] + beta);
        }
        if (k < spec->N) {
            const auto step = integrate(*spec->model, it.x[k], it.u[k], spec->integrator);
            P = from_loops(oracle::lyapunov_step_loops(step.A, step.B, cfg.K, P, cfg.G, cfg.W), 5);
        }
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("tightening cannot lower the optimal cost of a convex problem")
{
    std::mt19937_64 rng(3);
    const Matrix A = (Matrix(2, 2) << 0, 1, 0, 0).finished();
    const Matrix B = (Matrix(2, 1) << 0, 1).finished();
    OcpSpec sp = build_lq_ocp(A, B, Matrix::Identity(2, 2), 0.1 * Matrix::Identity(1, 1), Matrix::Identity(2, 2), 10, 1.0);
    sp.stage_constraints.state_bounds = {{1, -kInf, 0.5, "v"}};
    sp.stage_constraints.control_bounds = {{0, -2.0, 2.0, "u"}};
    sp.tighten_idx_0 = sp.tighten_idx_mid = {0};
    sp.finalize();
    auto spec = std::make_shared<const OcpSpec>(sp);
    for (int trial = 0; trial < 5; ++trial) {
        Iterate guess = Iterate::zeros(*spec);
        guess.x[0] = oracle::random_vector(rng, 2);
        guess.x[0][1] = std::min(guess.x[0][1], 0.3);
        const SqpResult nominal = sqp_solve(spec, guess);
        ZoroConfig cfg = ZoroConfig::zero(2, 1);
        cfg.W = 1e-3 * Matrix::Identity(2, 2);
        const ZoroSqpResult robust = zoro_sqp(spec, cfg, guess);
        REQUIRE(nominal.status == SqpStatus::Converged);
        REQUIRE(robust.sqp.status == SqpStatus::Converged);
        CHECK(ls_cost(*spec, robust.sqp.iterate) - ls_cost(*spec, nominal.iterate) >= -1e-8);
    }
}

TEST_CASE("infeasible tightened problem is reported distinctly")
{
    const DiffDriveScenario sc;
    const OcpPtr spec = diff_drive();
    ZoroConfig cfg = diff_drive_zoro_config(sc);
    cfg.gamma = 100.0;
    const ZoroSqpResult res = zoro_sqp(spec, cfg, diff_drive_guess(*spec));
    CHECK(res.sqp.status == SqpStatus::TightenedInfeasible);
}

TEST_CASE("real-time iteration variants")
{
    const DiffDriveScenario sc;
    const OcpPtr spec = diff_drive();
    const Iterate guess = diff_drive_guess(*spec);
    std::mt19937_64 rng(8);
    const Vector x0 = sc.x0 + oracle::random_vector(rng, 5, 0.01);

    SECTION("zero uncertainty equals plain RTI bit for bit")
    {
        SqpSolver plain(spec), robust(spec);
        plain.set_iterate(guess);
        robust.set_iterate(guess);
        for (int i = 0; i < 3; ++i) {
            const FeedbackResult a = plain.step(x0);
            zoro_rti_prepare(robust, ZoroConfig::zero(5, 2));
            const Vector b = zoro_rti_feedback(robust, x0);
            CHECK(a.u0 == b);
        }
    }

    SECTION("propagation in the preparation or the feedback phase gives the same control")
    {
        const ZoroConfig cfg = diff_drive_zoro_config(sc);
        SqpSolver early(spec), late(spec);
        early.set_iterate(guess);
        late.set_iterate(guess);
        zoro_rti_prepare(early, cfg);
        const Vector a = zoro_rti_feedback(early, x0);
        late.prepare();
        zoro_update(late, cfg); // after the state became available
        const Vector b = zoro_rti_feedback(late, x0);
        CHECK(a == b);
    }

    SECTION("repeated samples at the same state drift by at most one step")
    {
        const ZoroConfig cfg = diff_drive_zoro_config(sc);
        SqpSolver solver(spec);
        solver.set_iterate(guess);
        zoro_rti_prepare(solver, cfg);
        const Vector first = zoro_rti_feedback(solver, x0);
        solver.prepare();
        zoro_update(solver, cfg);
        const FeedbackResult fr = solver.feedback(x0);
        REQUIRE(fr.applied);
        CHECK((fr.u0 - first).lpNorm<Eigen::Infinity>() <= fr.step_norm + 1e-15);
    }
}

TEST_CASE("backoff factor from a probability level")
{
    CHECK(gamma_from_probability(0.5, GammaMethod::Normal) == Catch::Approx(0.0).margin(1e-15));
    CHECK(gamma_from_probability(0.75, GammaMethod::Chebyshev) == 2.0);
    CHECK(gamma_from_probability(0.99865, GammaMethod::Normal) == Catch::Approx(3.0).margin(1e-3));
    for (double p : {0.5, 0.9, 0.99, 0.99865, 0.01, 0.3}) {
        CHECK(std::abs(gamma_from_probability(p, GammaMethod::Normal) - oracle::normal_quantile_bisection(p)) <= 1e-6);
        CHECK(gamma_from_probability(p, GammaMethod::Chebyshev) == 1.0 / std::sqrt(1.0 - p));
    }
    CHECK_THROWS_AS(gamma_from_probability(0.0, GammaMethod::Normal), ConfigError);
    CHECK_THROWS_AS(gamma_from_probability(1.0, GammaMethod::Chebyshev), ConfigError);
}
