// Test-only reference computations. Nothing here calls into the code paths it is used to check.
#ifndef ZORO_TESTS_ORACLES_HPP
#define ZORO_TESTS_ORACLES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat random_matrix(std::mt19937_64& rng, int r, int c, double scale = 1.0)
{
    std::uniform_real_distribution<double> dist(-scale, scale);
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
    return m;
}

inline Vec random_vector(std::mt19937_64& rng, int n, double scale = 1.0)
{
    return random_matrix(rng, n, 1, scale);
}

/// Random PSD matrix of the given rank (rank == n gives a positive definite one).
inline Mat random_psd(std::mt19937_64& rng, int n, int rank = -1, double scale = 1.0)
{
    if (rank < 0) rank = n;
    const Mat F = random_matrix(rng, n, rank, scale);
    return F * F.transpose();
}

/// Central finite-difference Jacobian of func at x.
inline Mat central_fd(const std::function<Vec(const Vec&)>& func, const Vec& x, double step = 1e-6)
{
    const Vec f0 = func(x);
    Mat J(f0.size(), x.size());
    for (int j = 0; j < x.size(); ++j) {
        Vec xp = x, xm = x;
        xp[j] += step;
        xm[j] -= step;
        J.col(j) = (func(xp) - func(xm)) / (2.0 * step);
    }
    return J;
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
inline Mat expm(const Mat& A)
{
    const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (std::ldexp(norm, -s) > 0.25) ++s;
    const Mat As = A / std::ldexp(1.0, s);
    Mat term = Mat::Identity(A.rows(), A.cols());
    Mat sum = term;
    for (int k = 1; k <= 20; ++k) {
        term = term * As / double(k);
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

/// Zero-order-hold discretization of x' = A x + B u over h.
inline std::pair<Mat, Mat> exact_discretization(const Mat& A, const Mat& B, double h)
{
    const int nx = A.rows(), nu = B.cols();
    Mat M = Mat::Zero(nx + nu, nx + nu);
    M.topLeftCorner(nx, nx) = A * h;
    M.topRightCorner(nx, nu) = B * h;
    const Mat E = expm(M);
    return {E.topLeftCorner(nx, nx), E.topRightCorner(nx, nu)};
}

/// The map a 2-stage Gauss-Legendre step realizes on x' = A x + B u (constant u) is the
/// (2,2) Pade approximant of the augmented exponential.
inline std::pair<Mat, Mat> pade22_discretization(const Mat& A, const Mat& B, double h)
{
    const int nx = A.rows(), nu = B.cols();
    Mat M = Mat::Zero(nx + nu, nx + nu);
    M.topLeftCorner(nx, nx) = A * h;
    M.topRightCorner(nx, nu) = B * h;
    const Mat I = Mat::Identity(nx + nu, nx + nu);
    const Mat M2 = M * M;
    const Mat E = (I - 0.5 * M + M2 / 12.0).partialPivLu().solve(I + 0.5 * M + M2 / 12.0);
    return {E.topLeftCorner(nx, nx), E.topRightCorner(nx, nu)};
}

/// Finite-horizon discrete Riccati recursion; returns the first-stage gain K0 with u0 = K0 x0
/// for the cost 0.5 sum (x'Qx + u'Ru) + 0.5 x_N' QN x_N.
inline Mat riccati_first_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& QN, int N)
{
    Mat P = QN;
    Mat K;
    for (int k = N - 1; k >= 0; --k) {
        const Mat BtP = B.transpose() * P;
        K = -(R + BtP * B).ldlt().solve(BtP * A);
        P = Q + A.transpose() * P * A + A.transpose() * P * B * K;
        P = 0.5 * (P + P.transpose());
    }
    return K;
}

/// Uncertainty propagation written out element by element.
inline std::vector<double> lyapunov_step_loops(const Mat& A, const Mat& B, const Mat& K, const Mat& P,
                                               const Mat& G, const Mat& W)
{
    const int nx = A.rows(), nu = B.cols(), nw = W.rows();
    std::vector<double> acl(nx * nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double s = A(i, j);
            for (int l = 0; l < nu; ++l) s += B(i, l) * K(l, j);
            acl[i * nx + j] = s;
        }
    std::vector<double> out(nx * nx, 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double s = 0.0;
            for (int a = 0; a < nx; ++a)
                for (int b = 0; b < nx; ++b) s += acl[i * nx + a] * P(a, b) * acl[j * nx + b];
            for (int a = 0; a < nw; ++a)
                for (int b = 0; b < nw; ++b) s += G(i, a) * W(a, b) * G(j, b);
            out[i * nx + j] = s;
        }
    for (int i = 0; i < nx; ++i)
        for (int j = i + 1; j < nx; ++j) {
            const double m = 0.5 * (out[i * nx + j] + out[j * nx + i]);
            out[i * nx + j] = out[j * nx + i] = m;
        }
    return out;
}

/// gamma * sqrt(grad' [I; K] P [I; K]' grad), with the projection formed explicitly.
inline double backoff_quadratic_form(const Vec& grad, const Mat& K, const Mat& P, double gamma)
{
    const int nx = P.rows(), nu = K.rows();
    Mat IK(nx + nu, nx);
    IK.topRows(nx) = Mat::Identity(nx, nx);
    IK.bottomRows(nu) = K;
    const Mat M = IK * P * IK.transpose();
    double q = 0.0;
    for (int i = 0; i < nx + nu; ++i)
        for (int j = 0; j < nx + nu; ++j) q += grad[i] * M(i, j) * grad[j];
    return gamma * std::sqrt(std::max(0.0, q));
}

/// Standard normal CDF inverse by bisection.
inline double normal_quantile_bisection(double p)
{
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace oracle

#endif
