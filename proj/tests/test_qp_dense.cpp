#include "oracles.hpp"

#include "zoro/qp_dense.hpp"

#include <catch_amalgamated.hpp>

using namespace zoro;

namespace {

// Independent KKT verification: returns the worst violation over
// stationarity, primal feasibility, dual feasibility and complementarity.
double kkt_violation(const DenseQp& qp, const Vector& z, const Vector& lam)
{
    double worst = 0.0;
    const Vector stat = qp.H * z + qp.g + qp.C.transpose() * lam;
    for (Index i = 0; i < stat.size(); ++i) worst = std::max(worst, std::abs(stat[i]));
    for (Index i = 0; i < qp.m(); ++i) {
        double ci = qp.d[i];
        for (Index j = 0; j < qp.n(); ++j) ci += qp.C(i, j) * z[j];
        worst = std::max(worst, ci);
        worst = std::max(worst, -lam[i]);
        worst = std::max(worst, std::abs(lam[i] * ci));
    }
    return worst;
}

// Random strictly convex QP with a strictly feasible point.
DenseQp random_qp(std::mt19937_64& rng, int n, int m)
{
    DenseQp qp;
    qp.H = oracle::random_psd(rng, n) + 0.1 * Matrix::Identity(n, n);
    qp.g = oracle::random_vector(rng, n, 3.0);
    qp.C = oracle::random_matrix(rng, m, n);
    const Vector z_feas = oracle::random_vector(rng, n);
    std::uniform_real_distribution<double> slack(0.01, 1.0);
    qp.d.resize(m);
    for (int i = 0; i < m; ++i) qp.d[i] = -qp.C.row(i).dot(z_feas) - slack(rng);
    return qp;
}

} // namespace

TEST_CASE("unconstrained minimum")
{
    DenseQp qp{Matrix::Identity(2, 2), (Vector(2) << -1, -2).finished(), Matrix::Zero(0, 2), Vector::Zero(0)};
    const QpSolution s = solve_qp(qp);
    CHECK(s.status == QpStatus::Optimal);
    CHECK((s.z - (Vector(2) << 1, 2).finished()).norm() <= 1e-12);
}

TEST_CASE("single active bound")
{
    DenseQp qp{Matrix::Ones(1, 1), Vector::Constant(1, -4.0), Matrix::Ones(1, 1), Vector::Constant(1, -1.0)};
    const QpSolution s = solve_qp(qp);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(s.z[0] == Catch::Approx(1.0).margin(1e-10));
    CHECK(s.lambda[0] == Catch::Approx(3.0).margin(1e-10));
    CHECK(s.kkt_residual <= 1e-8);
}

TEST_CASE("random strictly convex QPs satisfy KKT to 1e-8")
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dn(1, 10), dm(1, 15);
    for (int trial = 0; trial < 20; ++trial) {
        const DenseQp qp = random_qp(rng, dn(rng), dm(rng));
        const QpSolution s = solve_qp(qp);
        INFO("trial " << trial);
        REQUIRE(s.status == QpStatus::Optimal);
        CHECK(kkt_violation(qp, s.z, s.lambda) <= 1e-8);
    }
}

TEST_CASE("row scaling leaves z unchanged and divides the multiplier")
{
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        DenseQp qp = random_qp(rng, 6, 10);
        const QpSolution base = solve_qp(qp);
        REQUIRE(base.status == QpStatus::Optimal);
        std::uniform_real_distribution<double> ds(0.1, 10.0);
        Vector scale(qp.m());
        for (Index i = 0; i < qp.m(); ++i) scale[i] = ds(rng);
        DenseQp scaled = qp;
        scaled.C = scale.asDiagonal() * qp.C;
        scaled.d = scale.cwiseProduct(qp.d);
        const QpSolution s = solve_qp(scaled);
        REQUIRE(s.status == QpStatus::Optimal);
        CHECK((s.z - base.z).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK((s.lambda.cwiseProduct(scale) - base.lambda).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("warm and cold starts agree")
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const DenseQp qp = random_qp(rng, 8, 12);
        const QpSolution cold = solve_qp(qp);
        const QpSolution warm = solve_qp(qp, Vector(cold.z + oracle::random_vector(rng, 8, 0.1)));
        REQUIRE(cold.status == QpStatus::Optimal);
        REQUIRE(warm.status == QpStatus::Optimal);
        CHECK((cold.z - warm.z).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("degenerate problems: duplicated rows and singular Hessian")
{
    // z <= 1 twice, H singular in the second direction but bounded by constraints
    DenseQp qp;
    qp.H = (Matrix(2, 2) << 1, 0, 0, 0).finished();
    qp.g = (Vector(2) << -3, -1).finished();
    qp.C = (Matrix(3, 2) << 1, 0, 1, 0, 0, 1).finished();
    qp.d = (Vector(3) << -1, -1, -2).finished();
    const QpSolution s = solve_qp(qp);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(s.z[0] == Catch::Approx(1.0).margin(1e-8));
    CHECK(s.z[1] == Catch::Approx(2.0).margin(1e-8));
    CHECK(s.lambda[0] + s.lambda[1] == Catch::Approx(2.0).margin(1e-8));
    CHECK(s.lambda[2] == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("primal infeasibility is detected")
{
    // z <= 1 and z >= 2
    DenseQp qp{Matrix::Ones(1, 1), Vector::Zero(1), (Matrix(2, 1) << 1, -1).finished(), (Vector(2) << -1, 2).finished()};
    const QpSolution s = solve_qp(qp);
    CHECK(s.status == QpStatus::Infeasible);

    std::mt19937_64 rng(5);
    DenseQp big = random_qp(rng, 5, 6);
    big.C.conservativeResize(8, 5);
    big.d.conservativeResize(8);
    big.C.row(6) = RowVector::Unit(5, 0);
    big.d[6] = 3.0; // z0 <= -3
    big.C.row(7) = -RowVector::Unit(5, 0);
    big.d[7] = 3.0; // z0 >= 3
    CHECK(solve_qp(big).status == QpStatus::Infeasible);
}

TEST_CASE("iteration cap")
{
    std::mt19937_64 rng(1);
    const DenseQp qp = random_qp(rng, 10, 15);
    QpSettings settings;
    settings.max_iter = 1;
    const QpSolution s = solve_qp(qp, std::nullopt, settings);
    // either polishing recovered the exact active set or the cap was reported
    if (s.status != QpStatus::Optimal) CHECK(s.status == QpStatus::MaxIter);
    CHECK(s.iterations <= 1);
}
