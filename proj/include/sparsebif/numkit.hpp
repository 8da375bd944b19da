#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>

#include "sparsebif/errors.hpp"

namespace sparsebif {

/// Uniform time grid: sample i lives at t0 + i*dt.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 0.0;
    Eigen::Index count = 0;

    TimeGrid() = default;
    TimeGrid(double t0, double dt, Eigen::Index count);

    double time(Eigen::Index i) const { return t0 + dt * static_cast<double>(i); }
    double t_end() const { return time(count - 1); }
    Eigen::VectorXd times() const;
};

/// Small counter-free splitmix64 generator. The point is not statistical
/// strength but a fixed, documented stream: identical seeds give identical
/// streams on every platform, which the reproducibility contracts rely on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller; the spare value is cached, so draws
    /// come in deterministic pairs.
    double normal();

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

    /// Derive an independent deterministic substream (used to give each
    /// parameter run its own generator regardless of execution order).
    Rng fork(std::uint64_t stream) const;

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SvdResult {
    Eigen::MatrixXd u;   // m x k, orthonormal columns
    Eigen::VectorXd s;   // k, nonincreasing, nonnegative
    Eigen::MatrixXd vt;  // k x n, orthonormal rows
};

/// Thin SVD, a = u * diag(s) * vt with k = min(rows, cols).
SvdResult thin_svd(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// argmin_x ||a x - b||_F^2 + ridge ||x||_F^2. With ridge = 0 the
/// minimum-norm solution is returned when a is rank-deficient.
Eigen::MatrixXd least_squares(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b,
                              double ridge = 0.0);

/// Second-order time derivative of row-sampled signals: central differences
/// on interior rows, one-sided three-point stencils at both ends.
Eigen::MatrixXd central_diff(const Eigen::Ref<const Eigen::MatrixXd>& x, double dt);

/// Natural cubic spline interpolant per column of y (knots on `grid`).
class CubicSplineSet {
public:
    CubicSplineSet(const TimeGrid& grid, const Eigen::Ref<const Eigen::MatrixXd>& y);

    /// Value of every column's spline at t. Throws OutOfRange outside the knots.
    Eigen::VectorXd eval(double t) const;

    /// Rows are evaluations at new_grid's samples.
    Eigen::MatrixXd resample(const TimeGrid& new_grid) const;

    const TimeGrid& grid() const { return grid_; }

private:
    TimeGrid grid_;
    Eigen::MatrixXd y_;       // knot values
    Eigen::MatrixXd second_;  // second derivatives at knots, natural ends = 0
};

CubicSplineSet natural_cubic_spline(const TimeGrid& grid,
                                    const Eigen::Ref<const Eigen::MatrixXd>& y);
Eigen::VectorXd eval_spline(const CubicSplineSet& s, double t);

using RhsFn = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& y, double mu)>;

/// Classical RK4 over the grid; row i is the state at grid.time(i), row 0 is y0.
/// Throws DivergedTrajectory (carrying the rows computed so far) on the first
/// non-finite state.
Eigen::MatrixXd rk4_integrate(const RhsFn& f, const Eigen::VectorXd& y0,
                              const TimeGrid& grid, double mu = 0.0);

/// Deterministic random matrix with orthonormal columns (Gaussian fill, thin
/// Householder QR, column signs fixed by the R diagonal).
Eigen::MatrixXd random_orthogonal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Runs body(i) for i in [0, n). Iterations must write disjoint state; results
/// are assembled by slot, so the outcome is identical for any thread count.
void parallel_for(Eigen::Index n, int threads, const std::function<void(Eigen::Index)>& body);

/// Throws InvalidInput when any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what);

}  // namespace sparsebif
