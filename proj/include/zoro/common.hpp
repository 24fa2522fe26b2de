#ifndef ZORO_COMMON_HPP
#define ZORO_COMMON_HPP

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace zoro {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Thrown when dimensions, indices or user-supplied settings are inconsistent.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by the integrators when a step cannot be completed.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, int stage = -1)
        : std::runtime_error(what), stage_(stage) {}
    int stage() const { return stage_; }

private:
    int stage_;
};

/// Thrown when an upstream quantity violates a numerical precondition
/// (e.g. a "PSD" matrix producing a negative quadratic form).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require_dim(Index got, Index expected, const char* what)
{
    if (got != expected) {
        throw ConfigError(std::string(what) + ": expected dimension " + std::to_string(expected)
                          + ", got " + std::to_string(got));
    }
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m)
{
    return m.allFinite();
}

// Wall-clock probe used by the solver phases. Counters are nanoseconds.
class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    std::int64_t elapsed_ns() const
    {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline Matrix symmetrized(const Matrix& m)
{
    return 0.5 * (m + m.transpose());
}

} // namespace zoro

#endif // ZORO_COMMON_HPP
