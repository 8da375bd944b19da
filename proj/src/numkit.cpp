#include "sparsebif/numkit.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <thread>
#include <vector>

namespace sparsebif {

TimeGrid::TimeGrid(double t0, double dt, Eigen::Index count) : t0(t0), dt(dt), count(count) {
    if (!(dt > 0.0)) throw InvalidInput("TimeGrid: dt must be positive");
    if (count < 2) throw InvalidInput("TimeGrid: need at least 2 samples");
}

Eigen::VectorXd TimeGrid::times() const {
    Eigen::VectorXd t(count);
    for (Eigen::Index i = 0; i < count; ++i) t[i] = time(i);
    return t;
}

std::uint64_t Rng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014)
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
}

Rng Rng::fork(std::uint64_t stream) const {
    // Hash (state, stream) into a fresh seed; splitmix64 scrambles the whole
    // 64-bit space, so distinct streams decorrelate.
    Rng h(state_ ^ 0xA0761D6478BD642FULL);
    h.state_ += stream * 0xE7037ED1A0B428DBULL;
    return Rng(h.next_u64());
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
    if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

SvdResult thin_svd(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    if (a.rows() < 1 || a.cols() < 1) throw InvalidInput("thin_svd: empty matrix");
    require_finite(a, "thin_svd");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericalFailure("thin_svd: SVD did not converge");
    return {svd.matrixU(), svd.singularValues(), svd.matrixV().transpose()};
}

Eigen::MatrixXd least_squares(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b, double ridge) {
    if (a.rows() != b.rows()) throw InvalidInput("least_squares: a.rows() != b.rows()");
    if (ridge < 0.0) throw InvalidInput("least_squares: ridge must be >= 0");
    if (ridge == 0.0) {
        // SVD solve: minimum-norm least-squares solution.
        Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        return svd.solve(b);
    }
    // Augmented system [a; sqrt(ridge) I] x = [b; 0] is the exact ridge solution
    // and stays well-posed for rank-deficient a.
    const Eigen::Index n = a.cols();
    Eigen::MatrixXd aug(a.rows() + n, n);
    aug.topRows(a.rows()) = a;
    aug.bottomRows(n) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(aug.rows(), b.cols());
    rhs.topRows(b.rows()) = b;
    return aug.householderQr().solve(rhs);
}

Eigen::MatrixXd central_diff(const Eigen::Ref<const Eigen::MatrixXd>& x, double dt) {
    if (x.rows() < 3) throw InvalidInput("central_diff: need at least 3 time samples");
    if (!(dt > 0.0)) throw InvalidInput("central_diff: dt must be positive");
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd d(n, x.cols());
    const double inv2 = 1.0 / (2.0 * dt);
    d.row(0) = (-3.0 * x.row(0) + 4.0 * x.row(1) - x.row(2)) * inv2;
    for (Eigen::Index i = 1; i + 1 < n; ++i) d.row(i) = (x.row(i + 1) - x.row(i - 1)) * inv2;
    d.row(n - 1) = (3.0 * x.row(n - 1) - 4.0 * x.row(n - 2) + x.row(n - 3)) * inv2;
    return d;
}

CubicSplineSet::CubicSplineSet(const TimeGrid& grid, const Eigen::Ref<const Eigen::MatrixXd>& y)
    : grid_(grid), y_(y) {
    if (grid.count < 3) throw InvalidInput("natural_cubic_spline: need at least 3 knots");
    if (y.rows() != grid.count) throw InvalidInput("natural_cubic_spline: y rows != grid count");
    const Eigen::Index n = grid.count;
    const double h = grid.dt;

    // Tridiagonal system for interior second derivatives (natural: ends are 0).
    // Uniform knots make the system h/6 * [1 4 1]; solve by the Thomas algorithm.
    second_ = Eigen::MatrixXd::Zero(n, y.cols());
    const Eigen::Index m = n - 2;
    if (m > 0) {
        Eigen::MatrixXd rhs(m, y.cols());
        for (Eigen::Index i = 0; i < m; ++i)
            rhs.row(i) = 6.0 / (h * h) * (y.row(i + 2) - 2.0 * y.row(i + 1) + y.row(i));
        Eigen::VectorXd diag = Eigen::VectorXd::Constant(m, 4.0);
        for (Eigen::Index i = 1; i < m; ++i) {
            double w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs.row(i) -= w * rhs.row(i - 1);
        }
        second_.row(m) = rhs.row(m - 1) / diag[m - 1];
        for (Eigen::Index i = m - 1; i >= 1; --i)
            second_.row(i) = (rhs.row(i - 1) - second_.row(i + 1)) / diag[i - 1];
    }
}

Eigen::VectorXd CubicSplineSet::eval(double t) const {
    const double t0 = grid_.t0;
    const double tn = grid_.t_end();
    const double h = grid_.dt;
    // Tolerate round-off at the boundaries, reject genuine extrapolation.
    const double slack = 1e-9 * (std::abs(tn - t0) + 1.0);
    if (t < t0 - slack || t > tn + slack) throw OutOfRange("eval_spline: t outside knot range");
    t = std::min(std::max(t, t0), tn);

    Eigen::Index i = static_cast<Eigen::Index>((t - t0) / h);
    i = std::min(i, grid_.count - 2);
    const double a = (grid_.time(i + 1) - t) / h;
    const double b = (t - grid_.time(i)) / h;
    return (a * y_.row(i) + b * y_.row(i + 1) +
            ((a * a * a - a) * second_.row(i) + (b * b * b - b) * second_.row(i + 1)) *
                (h * h / 6.0))
        .transpose();
}

Eigen::MatrixXd CubicSplineSet::resample(const TimeGrid& new_grid) const {
    Eigen::MatrixXd out(new_grid.count, y_.cols());
    for (Eigen::Index i = 0; i < new_grid.count; ++i)
        out.row(i) = eval(new_grid.time(i)).transpose();
    return out;
}

CubicSplineSet natural_cubic_spline(const TimeGrid& grid,
                                    const Eigen::Ref<const Eigen::MatrixXd>& y) {
    return CubicSplineSet(grid, y);
}

Eigen::VectorXd eval_spline(const CubicSplineSet& s, double t) { return s.eval(t); }

Eigen::MatrixXd rk4_integrate(const RhsFn& f, const Eigen::VectorXd& y0, const TimeGrid& grid,
                              double mu) {
    const Eigen::Index d = y0.size();
    Eigen::MatrixXd out(grid.count, d);
    out.row(0) = y0.transpose();
    Eigen::VectorXd y = y0;
    const double h = grid.dt;
    for (Eigen::Index i = 0; i + 1 < grid.count; ++i) {
        const double t = grid.time(i);
        Eigen::VectorXd k1 = f(t, y, mu);
        Eigen::VectorXd k2 = f(t + 0.5 * h, y + 0.5 * h * k1, mu);
        Eigen::VectorXd k3 = f(t + 0.5 * h, y + 0.5 * h * k2, mu);
        Eigen::VectorXd k4 = f(t + h, y + h * k3, mu);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!y.allFinite()) {
            throw DivergedTrajectory("rk4_integrate: non-finite state at step " +
                                         std::to_string(i + 1),
                                     i, out.topRows(i + 1));
        }
        out.row(i + 1) = y.transpose();
    }
    return out;
}

Eigen::MatrixXd random_orthogonal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    if (cols > rows) throw InvalidInput("random_orthogonal: cols must be <= rows");
    Eigen::MatrixXd g = rng.normal_matrix(rows, cols);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < cols; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

void parallel_for(Eigen::Index n, int threads, const std::function<void(Eigen::Index)>& body) {
    if (n <= 0) return;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = static_cast<int>(std::min<Eigen::Index>(threads, n));
    if (threads <= 1) {
        for (Eigen::Index i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            for (Eigen::Index i = t; i < n; i += threads) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace sparsebif
