#include "sparsebif/datagen.hpp"

#include <algorithm>
#include <cmath>

namespace sparsebif {

std::string to_string(SystemKind kind) {
    switch (kind) {
        case SystemKind::PitchforkNormalForm: return "pitchfork";
        case SystemKind::HopfNormalForm: return "hopf";
        case SystemKind::Lorenz: return "lorenz";
    }
    return "unknown";
}

SystemKind system_kind_from_string(const std::string& name) {
    if (name == "pitchfork") return SystemKind::PitchforkNormalForm;
    if (name == "hopf") return SystemKind::HopfNormalForm;
    if (name == "lorenz") return SystemKind::Lorenz;
    throw InvalidInput("unknown system kind: " + name);
}

Eigen::Index FomSystem::dim() const {
    switch (kind) {
        case SystemKind::PitchforkNormalForm: return 1 + transverse_dims;
        case SystemKind::HopfNormalForm: return 2 + transverse_dims;
        case SystemKind::Lorenz: return 3;
    }
    return 0;
}

void FomSystem::validate() const {
    if (transverse_dims < 0) throw InvalidInput("FomSystem: transverse_dims must be >= 0");
    if (!(transverse_rate > 0.0)) throw InvalidInput("FomSystem: transverse_rate must be > 0");
    if (kind == SystemKind::HopfNormalForm && !(omega > 0.0))
        throw InvalidInput("FomSystem: omega must be > 0 for Hopf");
}

void SnapshotSet::validate() const {
    if (params.size() != trajectories.size())
        throw InvalidInput("SnapshotSet: params/trajectories size mismatch");
    for (std::size_t i = 1; i < params.size(); ++i)
        if (!(params[i] > params[i - 1]))
            throw InvalidInput("SnapshotSet: params must be strictly increasing");
    const Eigen::Index n_h = full_dim();
    Eigen::Index covered = 0;
    for (const auto& s : field_layout) covered += s.size;
    if (!field_layout.empty() && covered != n_h)
        throw InvalidInput("SnapshotSet: field layout does not partition the state");
    for (const auto& t : trajectories) {
        if (t.rows() != grid.count || t.cols() != n_h)
            throw InvalidInput("SnapshotSet: trajectory shape mismatch");
    }
}

FieldLayout default_field_layout(Eigen::Index n_h, const std::vector<std::string>& names) {
    if (names.empty()) throw InvalidInput("default_field_layout: no field names");
    FieldLayout layout;
    const Eigen::Index k = static_cast<Eigen::Index>(names.size());
    Eigen::Index offset = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        Eigen::Index size = n_h / k + (i < n_h % k ? 1 : 0);
        layout.push_back({names[static_cast<std::size_t>(i)], offset, size});
        offset += size;
    }
    return layout;
}

const FieldSlice& find_field(const FieldLayout& layout, const std::string& name) {
    for (const auto& s : layout)
        if (s.name == name) return s;
    throw InvalidInput("unknown field: " + name);
}

LiftMap make_lift_map(Eigen::Index n_h, Eigen::Index latent_dim, double nonlinear_gain,
                      Rng& rng) {
    if (2 * latent_dim > n_h)
        throw InvalidInput("make_lift_map: need n_h >= 2 * latent_dim for the quadratic block");
    if (nonlinear_gain < 0.0) throw InvalidInput("make_lift_map: nonlinear_gain must be >= 0");
    Eigen::MatrixXd qq = random_orthogonal(n_h, 2 * latent_dim, rng);
    LiftMap map;
    map.q = qq.leftCols(latent_dim);
    map.q2 = qq.rightCols(latent_dim);
    map.nonlinear_gain = nonlinear_gain;
    return map;
}

Eigen::VectorXd latent_rhs(const FomSystem& system, double /*t*/, const Eigen::VectorXd& y,
                           double mu) {
    if (y.size() != system.dim()) throw InvalidInput("latent_rhs: state dimension mismatch");
    if (!y.allFinite()) throw InvalidInput("latent_rhs: non-finite state");
    Eigen::VectorXd dy(y.size());
    switch (system.kind) {
        case SystemKind::PitchforkNormalForm: {
            dy[0] = (system.mu_star - mu) * y[0] - y[0] * y[0] * y[0];
            for (Eigen::Index k = 1; k < y.size(); ++k) dy[k] = -system.transverse_rate * y[k];
            break;
        }
        case SystemKind::HopfNormalForm: {
            const double alpha = mu - system.mu_star;
            const double r2 = y[0] * y[0] + y[1] * y[1];
            dy[0] = alpha * y[0] - system.omega * y[1] - y[0] * r2;
            dy[1] = system.omega * y[0] + alpha * y[1] - y[1] * r2;
            for (Eigen::Index k = 2; k < y.size(); ++k) dy[k] = -system.transverse_rate * y[k];
            break;
        }
        case SystemKind::Lorenz: {
            const double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
            dy[0] = sigma * (y[1] - y[0]);
            dy[1] = y[0] * (rho - y[2]) - y[1];
            dy[2] = y[0] * y[1] - beta * y[2];
            break;
        }
    }
    return dy;
}

SimResult simulate_fom(const FomSystem& system, double mu, const TimeGrid& grid,
                       const Eigen::VectorXd& y0, double stop_tol) {
    system.validate();
    if (y0.size() != system.dim()) throw InvalidInput("simulate_fom: y0 dimension mismatch");

    auto rhs = [&system](double t, const Eigen::VectorXd& y, double m) {
        return latent_rhs(system, t, y, m);
    };
    if (stop_tol <= 0.0) {
        SimResult res;
        res.traj = rk4_integrate(rhs, y0, grid, mu);
        res.stop_index = grid.count - 1;
        res.stopped_early = false;
        return res;
    }

    // Step manually so the run can end as soon as the relative update
    // criterion fires.
    Eigen::MatrixXd traj(grid.count, y0.size());
    traj.row(0) = y0.transpose();
    Eigen::VectorXd y = y0;
    const double h = grid.dt;
    for (Eigen::Index i = 0; i + 1 < grid.count; ++i) {
        const double t = grid.time(i);
        Eigen::VectorXd k1 = rhs(t, y, mu);
        Eigen::VectorXd k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, mu);
        Eigen::VectorXd k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, mu);
        Eigen::VectorXd k4 = rhs(t + h, y + h * k3, mu);
        Eigen::VectorXd ynext = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!ynext.allFinite())
            throw DivergedTrajectory("simulate_fom: non-finite state at step " +
                                         std::to_string(i + 1),
                                     i, traj.topRows(i + 1));
        traj.row(i + 1) = ynext.transpose();
        const double norm_prev = y.norm();
        y = ynext;
        if (norm_prev > 0.0 && (ynext - traj.row(i).transpose()).norm() / norm_prev < stop_tol) {
            SimResult res;
            res.traj = traj.topRows(i + 2);
            res.stop_index = i + 1;
            res.stopped_early = true;
            return res;
        }
    }
    SimResult res;
    res.traj = std::move(traj);
    res.stop_index = grid.count - 1;
    res.stopped_early = false;
    return res;
}

Eigen::VectorXd fom_rhs_full(const FomSystem& system, const LiftMap& map, double t,
                             const Eigen::VectorXd& x, double mu) {
    if (x.size() != map.full_dim()) throw InvalidInput("fom_rhs_full: state dimension mismatch");
    // q^T q2 = 0 by construction, so the latent coordinates are recovered
    // exactly and the lifted field x' = q y' + 2 g q2 (y .* y') is closed.
    Eigen::VectorXd y = map.q.transpose() * x;
    Eigen::VectorXd dy = latent_rhs(system, t, y, mu);
    Eigen::VectorXd dx = map.q * dy;
    if (map.nonlinear_gain != 0.0)
        dx += 2.0 * map.nonlinear_gain * (map.q2 * y.cwiseProduct(dy));
    return dx;
}

Eigen::MatrixXd lift(const Eigen::Ref<const Eigen::MatrixXd>& latent_rows, const LiftMap& map) {
    if (latent_rows.cols() != map.latent_dim())
        throw InvalidInput("lift: latent dimension mismatch");
    Eigen::MatrixXd out = latent_rows * map.q.transpose();
    if (map.nonlinear_gain != 0.0)
        out += map.nonlinear_gain * latent_rows.cwiseProduct(latent_rows) * map.q2.transpose();
    return out;
}

Eigen::MatrixXd pad_to_final(const Eigen::Ref<const Eigen::MatrixXd>& traj,
                             Eigen::Index target_count) {
    if (target_count < traj.rows())
        throw InvalidInput("pad_to_final: target_count smaller than trajectory");
    if (traj.rows() == 0) throw InvalidInput("pad_to_final: empty trajectory");
    Eigen::MatrixXd out(target_count, traj.cols());
    out.topRows(traj.rows()) = traj;
    for (Eigen::Index i = traj.rows(); i < target_count; ++i) out.row(i) = traj.row(traj.rows() - 1);
    return out;
}

SnapshotSet generate_dataset(const FomSystem& system, const std::vector<double>& params,
                             const TimeGrid& grid, const LiftMap& map, Rng& rng,
                             double stop_tol, int threads) {
    system.validate();
    if (params.empty()) throw InvalidInput("generate_dataset: empty parameter list");
    if (map.latent_dim() != system.dim())
        throw InvalidInput("generate_dataset: lift map does not match system dimension");
    for (std::size_t i = 1; i < params.size(); ++i)
        if (!(params[i] > params[i - 1]))
            throw InvalidInput("generate_dataset: params must be strictly increasing");

    const Eigen::Index n_params = static_cast<Eigen::Index>(params.size());
    SnapshotSet set;
    set.params = params;
    set.grid = grid;
    set.trajectories.resize(params.size());
    set.field_layout = default_field_layout(map.full_dim());
    set.meta.system_kind = to_string(system.kind);
    set.meta.mu_star = system.mu_star;
    set.meta.omega = system.omega;
    set.meta.transverse_dims = system.transverse_dims;
    set.meta.transverse_rate = system.transverse_rate;
    set.meta.nonlinear_gain = map.nonlinear_gain;
    set.meta.seed = rng.state();
    set.meta.stop_tol = stop_tol;
    set.meta.stop_index.resize(params.size());

    // Each parameter gets its own forked stream: results do not depend on
    // execution order, so the per-parameter runs can go wide.
    parallel_for(n_params, threads, [&](Eigen::Index m) {
        Rng local = rng.fork(static_cast<std::uint64_t>(m));
        Eigen::VectorXd y0(system.dim());
        // Asymmetric seeded start: the sign of the first component selects the
        // pitchfork branch; the magnitude keeps the transient short.
        const double sign = local.uniform() < 0.5 ? -1.0 : 1.0;
        y0[0] = sign * local.uniform(0.02, 0.1);
        for (Eigen::Index k = 1; k < y0.size(); ++k) y0[k] = 0.1 * local.normal();
        if (system.kind == SystemKind::Lorenz) y0 = Eigen::Vector3d(-8.0, 7.0, 27.0) + y0;

        SimResult sim = simulate_fom(system, params[static_cast<std::size_t>(m)], grid, y0,
                                     stop_tol);
        set.meta.stop_index[static_cast<std::size_t>(m)] = sim.stop_index;
        set.trajectories[static_cast<std::size_t>(m)] =
            lift(pad_to_final(sim.traj, grid.count), map);
    });
    set.validate();
    return set;
}

}  // namespace sparsebif
