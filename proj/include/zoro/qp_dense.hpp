#ifndef ZORO_QP_DENSE_HPP
#define ZORO_QP_DENSE_HPP

#include "zoro/common.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace zoro {

/// min 0.5 z'Hz + g'z  s.t.  C z + d <= 0
struct DenseQp {
    Matrix H;
    Vector g;
    Matrix C;
    Vector d;

    Index n() const { return H.rows(); }
    Index m() const { return C.rows(); }
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

inline std::string to_string(QpStatus s)
{
    switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

struct QpSolution {
    Vector z;
    Vector lambda;
    QpStatus status = QpStatus::MaxIter;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool polished = false;
};

struct QpSettings {
    double tol = 1e-8;
    int max_iter = 200;
    double reg = 1e-8;
};

/// Largest violation of the KKT conditions of `qp` at (z, lambda):
/// stationarity, primal feasibility, dual feasibility and complementarity.
inline double qp_kkt_residual(const DenseQp& qp, const Vector& z, const Vector& lambda)
{
    double res = (qp.H * z + qp.g + qp.C.transpose() * lambda).lpNorm<Eigen::Infinity>();
    if (qp.m() > 0) {
        const Vector c = qp.C * z + qp.d;
        res = std::max(res, c.cwiseMax(0.0).maxCoeff());
        res = std::max(res, (-lambda).cwiseMax(0.0).maxCoeff());
        res = std::max(res, lambda.cwiseProduct(c).cwiseAbs().maxCoeff());
    }
    return res;
}

/// Dense primal-dual interior-point QP solver (Mehrotra predictor-corrector) with a final
/// active-set polishing step. One instance owns its workspace.
class QpSolver {
public:
    explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

    const QpSettings& settings() const { return settings_; }

    QpSolution solve(const DenseQp& qp, const std::optional<Vector>& warm_start = std::nullopt)
    {
        const Index n = qp.n();
        const Index m = qp.m();
        require_dim(qp.H.cols(), n, "qp: H columns");
        require_dim(qp.g.size(), n, "qp: g");
        if (m > 0) require_dim(qp.C.cols(), n, "qp: C columns");
        require_dim(qp.d.size(), m, "qp: d");

        QpSolution sol;
        if (m == 0) {
            Matrix Hr = qp.H;
            Hr.diagonal().array() += settings_.reg;
            sol.z = Hr.ldlt().solve(-qp.g);
            // one refinement step against the unregularized Hessian
            sol.z += Hr.ldlt().solve(-(qp.H * sol.z + qp.g));
            sol.lambda = Vector::Zero(0);
            sol.kkt_residual = qp_kkt_residual(qp, sol.z, sol.lambda);
            sol.status = sol.kkt_residual <= settings_.tol ? QpStatus::Optimal : QpStatus::MaxIter;
            sol.iterations = 1;
            return sol;
        }

        Vector z = warm_start ? *warm_start : Vector::Zero(n);
        require_dim(z.size(), n, "qp: warm start");
        Vector s = (-(qp.C * z + qp.d)).cwiseMax(1.0);
        Vector lam = Vector::Ones(m);

        const double tol = settings_.tol;
        const Matrix Ct = qp.C.transpose();
        int it = 0;
        for (; it < settings_.max_iter; ++it) {
            const Vector rd = qp.H * z + qp.g + Ct * lam;
            const Vector rp = qp.C * z + qp.d + s;
            const double mu = lam.dot(s) / double(m);
            const double comp = lam.cwiseProduct(s).maxCoeff();
            if (rd.lpNorm<Eigen::Infinity>() <= tol && rp.lpNorm<Eigen::Infinity>() <= tol && comp <= tol) {
                break;
            }
            if (lam.lpNorm<Eigen::Infinity>() > 1e9 && infeasibility_certificate(qp, lam)) {
                sol.z = z;
                sol.lambda = lam;
                sol.status = QpStatus::Infeasible;
                sol.iterations = it;
                sol.kkt_residual = qp_kkt_residual(qp, z, lam);
                return sol;
            }

            // Normal equations  (H + C' diag(lam/s) C) dz = rhs
            const Vector w = lam.cwiseQuotient(s);
            Matrix M = qp.H;
            M.diagonal().array() += settings_.reg;
            M.noalias() += Ct * w.asDiagonal() * qp.C;
            const Eigen::LLT<Matrix> llt(M);
            if (llt.info() != Eigen::Success) break;

            auto direction = [&](const Vector& rc, Vector& dz, Vector& dlam, Vector& ds) {
                // dlam = S^-1 (-rc + Lam rp + Lam C dz), ds = -rp - C dz
                const Vector tmp = (-rc + lam.cwiseProduct(rp)).cwiseQuotient(s);
                dz = llt.solve(-rd - Ct * tmp);
                ds = -rp - qp.C * dz;
                dlam = (-rc - lam.cwiseProduct(ds)).cwiseQuotient(s);
            };
            auto max_step = [](const Vector& v, const Vector& dv) {
                double a = 1.0;
                for (Index i = 0; i < v.size(); ++i) {
                    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
                }
                return a;
            };

            Vector dz, dlam, ds;
            direction(lam.cwiseProduct(s), dz, dlam, ds);
            const double a_aff = std::min(max_step(s, ds), max_step(lam, dlam));
            const double mu_aff = (s + a_aff * ds).dot(lam + a_aff * dlam) / double(m);
            const double sigma = std::pow(mu_aff / mu, 3);

            const Vector rc = lam.cwiseProduct(s) + ds.cwiseProduct(dlam) - Vector::Constant(m, sigma * mu);
            direction(rc, dz, dlam, ds);
            const double alpha = std::min(1.0, 0.995 * std::min(max_step(s, ds), max_step(lam, dlam)));
            z += alpha * dz;
            s += alpha * ds;
            lam += alpha * dlam;
        }

        sol.z = z;
        sol.lambda = lam;
        sol.iterations = it;
        sol.kkt_residual = qp_kkt_residual(qp, z, lam);
        polish(qp, s, sol);
        if (sol.kkt_residual <= tol) {
            sol.status = QpStatus::Optimal;
        } else if (infeasibility_certificate(qp, lam)) {
            sol.status = QpStatus::Infeasible;
        } else {
            sol.status = QpStatus::MaxIter;
        }
        return sol;
    }

private:
    // Farkas certificate for {z : Cz + d <= 0} = {}: lam >= 0, C'lam = 0, d'lam > 0.
    static bool infeasibility_certificate(const DenseQp& qp, const Vector& lam)
    {
        const double scale = lam.lpNorm<1>();
        if (!(scale > 0.0)) return false;
        const Vector l = lam / scale;
        const double cnorm = std::max(1.0, qp.C.cwiseAbs().maxCoeff());
        return (qp.C.transpose() * l).lpNorm<Eigen::Infinity>() <= 1e-6 * cnorm && qp.d.dot(l) > 1e-9;
    }

    // Re-solve the equality-constrained KKT system on the identified active set and keep the
    // result if it is a better KKT point.
    void polish(const DenseQp& qp, const Vector& s, QpSolution& sol) const
    {
        const Index n = qp.n();
        std::vector<Index> active;
        for (Index i = 0; i < qp.m(); ++i) {
            if (sol.lambda[i] > s[i]) active.push_back(i);
        }
        const Index na = static_cast<Index>(active.size());
        if (na > n) return;
        Matrix K = Matrix::Zero(n + na, n + na);
        Vector rhs(n + na);
        K.topLeftCorner(n, n) = qp.H;
        rhs.head(n) = -qp.g;
        for (Index j = 0; j < na; ++j) {
            K.block(0, n + j, n, 1) = qp.C.row(active[j]).transpose();
            K.block(n + j, 0, 1, n) = qp.C.row(active[j]);
            rhs[n + j] = -qp.d[active[j]];
        }
        const Eigen::FullPivLU<Matrix> lu(K);
        if (lu.rank() < n + na) return;
        const Vector sol_kkt = lu.solve(rhs);
        Vector z = sol_kkt.head(n);
        Vector lam = Vector::Zero(qp.m());
        for (Index j = 0; j < na; ++j) lam[active[j]] = std::max(0.0, sol_kkt[n + j]);
        const double res = qp_kkt_residual(qp, z, lam);
        if (res <= sol.kkt_residual) {
            sol.z = std::move(z);
            sol.lambda = std::move(lam);
            sol.kkt_residual = res;
            sol.polished = true;
        }
    }

    QpSettings settings_;
};

inline QpSolution solve_qp(const DenseQp& qp, const std::optional<Vector>& warm_start = std::nullopt,
                           QpSettings settings = {})
{
    return QpSolver(settings).solve(qp, warm_start);
}

} // namespace zoro

#endif // ZORO_QP_DENSE_HPP
