#ifndef ZORO_MODEL_HPP
#define ZORO_MODEL_HPP

#include "zoro/common.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace zoro {

/// Continuous-time dynamics x' = f(x, u) with analytic Jacobians.
///
/// Implementations are immutable after construction and may be shared
/// between threads.
class Model {
public:
    virtual ~Model() = default;

    virtual int nx() const = 0;
    virtual int nu() const = 0;
    virtual std::string name() const = 0;

    virtual Vector f(const Vector& x, const Vector& u) const = 0;
    virtual Matrix dfdx(const Vector& x, const Vector& u) const = 0;
    virtual Matrix dfdu(const Vector& x, const Vector& u) const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

inline void check_model_args(const Model& model, const Vector& x, const Vector& u)
{
    require_dim(x.size(), model.nx(), "state vector");
    require_dim(u.size(), model.nu(), "control vector");
}

inline Vector eval_dynamics(const Model& model, const Vector& x, const Vector& u)
{
    check_model_args(model, x, u);
    return model.f(x, u);
}

struct Jacobians {
    Matrix dfdx;
    Matrix dfdu;
};

inline Jacobians eval_jacobians(const Model& model, const Vector& x, const Vector& u)
{
    check_model_args(model, x, u);
    return {model.dfdx(x, u), model.dfdu(x, u)};
}

// ---------------------------------------------------------------------------
// Differential drive robot.
//   state   (p_x, p_y, theta, v, omega)
//   control (a, alpha)
// ---------------------------------------------------------------------------
class DiffDriveModel final : public Model {
public:
    enum State : int { kPx = 0, kPy, kTheta, kV, kOmega };
    enum Control : int { kAcc = 0, kAngAcc };

    int nx() const override { return 5; }
    int nu() const override { return 2; }
    std::string name() const override { return "diff_drive"; }

    Vector f(const Vector& x, const Vector& u) const override
    {
        Vector dx(5);
        dx << x[kV] * std::cos(x[kTheta]), x[kV] * std::sin(x[kTheta]), x[kOmega], u[kAcc],
            u[kAngAcc];
        return dx;
    }

    Matrix dfdx(const Vector& x, const Vector&) const override
    {
        const double c = std::cos(x[kTheta]);
        const double s = std::sin(x[kTheta]);
        Matrix J = Matrix::Zero(5, 5);
        J(kPx, kTheta) = -x[kV] * s;
        J(kPx, kV) = c;
        J(kPy, kTheta) = x[kV] * c;
        J(kPy, kV) = s;
        J(kTheta, kOmega) = 1.0;
        return J;
    }

    Matrix dfdu(const Vector&, const Vector&) const override
    {
        Matrix J = Matrix::Zero(5, 2);
        J(kV, kAcc) = 1.0;
        J(kOmega, kAngAcc) = 1.0;
        return J;
    }
};

// ---------------------------------------------------------------------------
// Linear time-invariant model x' = A x + B u. Also covers the degenerate
// test systems (f == 0, x' = u, x' = -x).
// ---------------------------------------------------------------------------
class LtiModel final : public Model {
public:
    LtiModel(Matrix A, Matrix B) : A_(std::move(A)), B_(std::move(B))
    {
        if (A_.rows() != A_.cols()) throw ConfigError("LtiModel: A must be square");
        require_dim(B_.rows(), A_.rows(), "LtiModel: rows of B");
    }

    int nx() const override { return static_cast<int>(A_.rows()); }
    int nu() const override { return static_cast<int>(B_.cols()); }
    std::string name() const override { return "lti"; }

    Vector f(const Vector& x, const Vector& u) const override { return A_ * x + B_ * u; }
    Matrix dfdx(const Vector&, const Vector&) const override { return A_; }
    Matrix dfdu(const Vector&, const Vector&) const override { return B_; }

    const Matrix& A() const { return A_; }
    const Matrix& B() const { return B_; }

private:
    Matrix A_;
    Matrix B_;
};

// ---------------------------------------------------------------------------
// Hanging chain of point masses in 3D, connected by linear springs.
//
// Mass 0 is anchored at the origin, masses 1..n_mass-2 are free, and the
// last mass is the actuated end whose velocity is the control input.
//   state = (p_1..p_{M-2}, v_1..v_{M-2}, p_end), n_x = 6 (M - 2) + 3
//   control = end velocity, n_u = 3
// Default parameters are implementation defaults, not identified values.
// ---------------------------------------------------------------------------
struct ChainParameters {
    double mass = 0.033;         // [kg]
    double spring_constant = 33; // [N/m]
    double rest_length = 0.033;  // [m]
    double gravity = 9.81;       // [m/s^2]
};

class HangingChainModel final : public Model {
public:
    explicit HangingChainModel(int n_mass, ChainParameters params = {})
        : n_mass_(n_mass), p_(params)
    {
        if (n_mass < 3) throw ConfigError("HangingChainModel: n_mass must be >= 3");
    }

    int n_mass() const { return n_mass_; }
    int n_free() const { return n_mass_ - 2; }
    int nx() const override { return 6 * n_free() + 3; }
    int nu() const override { return 3; }
    std::string name() const override { return "hanging_chain"; }
    const ChainParameters& parameters() const { return p_; }

    int pos_index(int free_mass) const { return 3 * free_mass; }
    int vel_index(int free_mass) const { return 3 * n_free() + 3 * free_mass; }
    int end_index() const { return 6 * n_free(); }

    Vector f(const Vector& x, const Vector& u) const override
    {
        const int nf = n_free();
        Vector dx = Vector::Zero(nx());
        for (int i = 0; i < nf; ++i) {
            dx.segment<3>(pos_index(i)) = x.segment<3>(vel_index(i));
            Eigen::Vector3d acc(0.0, 0.0, -p_.gravity);
            acc += (spring_force(link(x, i + 1)) - spring_force(link(x, i))) / p_.mass;
            dx.segment<3>(vel_index(i)) = acc;
        }
        dx.segment<3>(end_index()) = u;
        return dx;
    }

    Matrix dfdx(const Vector& x, const Vector&) const override
    {
        const int nf = n_free();
        Matrix J = Matrix::Zero(nx(), nx());
        for (int i = 0; i < nf; ++i) {
            J.block<3, 3>(pos_index(i), vel_index(i)).setIdentity();
            // link j connects node j-1 to node j (node 0 = anchor, node nf+1 = end).
            const Eigen::Matrix3d d_upper = spring_jacobian(link(x, i + 1)) / p_.mass;
            const Eigen::Matrix3d d_lower = spring_jacobian(link(x, i)) / p_.mass;
            // acc_i = (F(p_{i+1} - p_i) - F(p_i - p_{i-1})) / m
            J.block<3, 3>(vel_index(i), pos_index(i)) += -d_upper - d_lower;
            const int upper = node_pos_index(i + 2);
            if (upper >= 0) J.block<3, 3>(vel_index(i), upper) += d_upper;
            const int lower = node_pos_index(i);
            if (lower >= 0) J.block<3, 3>(vel_index(i), lower) += d_lower;
        }
        return J;
    }

    Matrix dfdu(const Vector&, const Vector&) const override
    {
        Matrix J = Matrix::Zero(nx(), 3);
        J.block<3, 3>(end_index(), 0).setIdentity();
        return J;
    }

    /// Straight chain from the anchor to `end`, all velocities zero.
    Vector straight_state(const Eigen::Vector3d& end) const
    {
        Vector x = Vector::Zero(nx());
        for (int i = 0; i < n_free(); ++i) {
            x.segment<3>(pos_index(i)) = end * double(i + 1) / double(n_mass_ - 1);
        }
        x.segment<3>(end_index()) = end;
        return x;
    }

private:
    // Position of chain node j (0 = anchor, n_mass-1 = end) inside x, or -1 for the anchor.
    int node_pos_index(int node) const
    {
        if (node == 0) return -1;
        if (node == n_mass_ - 1) return end_index();
        return pos_index(node - 1);
    }

    Eigen::Vector3d node_position(const Vector& x, int node) const
    {
        const int idx = node_pos_index(node);
        return idx < 0 ? Eigen::Vector3d::Zero() : Eigen::Vector3d(x.segment<3>(idx));
    }

    // Vector of link j, from node j to node j+1.
    Eigen::Vector3d link(const Vector& x, int j) const
    {
        return node_position(x, j + 1) - node_position(x, j);
    }

    Eigen::Vector3d spring_force(const Eigen::Vector3d& d) const
    {
        const double len = d.norm();
        return p_.spring_constant * (1.0 - p_.rest_length / len) * d;
    }

    Eigen::Matrix3d spring_jacobian(const Eigen::Vector3d& d) const
    {
        const double len = d.norm();
        return p_.spring_constant
            * ((1.0 - p_.rest_length / len) * Eigen::Matrix3d::Identity()
               + p_.rest_length / (len * len * len) * d * d.transpose());
    }

    int n_mass_;
    ChainParameters p_;
};

} // namespace zoro

#endif // ZORO_MODEL_HPP
