#include "sparsebif/pod.hpp"

#include <cmath>

namespace sparsebif {

TruncationRule TruncationRule::energy(double delta) {
    if (!(delta > 0.0 && delta < 1.0))
        throw InvalidInput("TruncationRule: delta must be in (0, 1)");
    TruncationRule r;
    r.mode = Mode::energy_tol;
    r.delta = delta;
    return r;
}

TruncationRule TruncationRule::fixed(Eigen::Index rank) {
    if (rank < 1) throw InvalidInput("TruncationRule: rank must be >= 1");
    TruncationRule r;
    r.mode = Mode::fixed_rank;
    r.rank = rank;
    return r;
}

Eigen::Index truncation_rank(const Eigen::VectorXd& s, double delta) {
    if (s.size() == 0) throw InvalidInput("truncation_rank: empty spectrum");
    const double total = s.squaredNorm();
    if (total == 0.0) throw InvalidInput("truncation_rank: all-zero spectrum");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        acc += s[i] * s[i];
        if (acc / total >= 1.0 - delta) return i + 1;
    }
    return s.size();
}

namespace {

void fix_mode_signs(Eigen::MatrixXd& modes) {
    for (Eigen::Index j = 0; j < modes.cols(); ++j) {
        Eigen::Index imax = 0;
        modes.col(j).cwiseAbs().maxCoeff(&imax);
        if (modes(imax, j) < 0.0) modes.col(j) = -modes.col(j);
    }
}

Eigen::Index pick_rank(const Eigen::VectorXd& s, const TruncationRule& rule) {
    if (rule.mode == TruncationRule::Mode::fixed_rank)
        return std::min(rule.rank, s.size());
    if (s.squaredNorm() == 0.0) return 1;  // degenerate all-zero data keeps one mode
    return truncation_rank(s, rule.delta);
}

}  // namespace

PodBasis pod(const Eigen::Ref<const Eigen::MatrixXd>& snapshots, const TruncationRule& rule) {
    if (snapshots.cols() < 1 || snapshots.rows() < 1)
        throw InvalidInput("pod: need at least one snapshot");
    SvdResult svd = thin_svd(snapshots);
    const Eigen::Index n = pick_rank(svd.s, rule);
    PodBasis basis;
    basis.modes = svd.u.leftCols(n);
    basis.singular_values = svd.s;
    basis.level = PodLevel::single;
    fix_mode_signs(basis.modes);
    return basis;
}

PodBasis nested_pod(const SnapshotSet& set, const TruncationRule& local_rule,
                    const TruncationRule& global_rule, int threads) {
    if (set.trajectories.empty()) throw InvalidInput("nested_pod: empty snapshot set");
    const Eigen::Index n_params = static_cast<Eigen::Index>(set.trajectories.size());

    // Local PODs are independent per parameter; assembly order follows params.
    std::vector<PodBasis> locals(set.trajectories.size());
    parallel_for(n_params, threads, [&](Eigen::Index m) {
        locals[static_cast<std::size_t>(m)] =
            pod(set.trajectories[static_cast<std::size_t>(m)].transpose(), local_rule);
    });

    Eigen::Index total = 0;
    for (const auto& b : locals) total += b.rank();
    Eigen::MatrixXd concat(set.full_dim(), total);
    std::vector<Eigen::Index> local_ranks;
    Eigen::Index at = 0;
    for (const auto& b : locals) {
        concat.middleCols(at, b.rank()) = b.modes;
        at += b.rank();
        local_ranks.push_back(b.rank());
    }

    PodBasis global = pod(concat, global_rule);
    global.level = PodLevel::nested;
    global.local_ranks = std::move(local_ranks);
    return global;
}

Eigen::MatrixXd project(const PodBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& x_rows) {
    if (x_rows.cols() != basis.full_dim())
        throw InvalidInput("project: state dimension does not match basis");
    return x_rows * basis.modes;
}

Eigen::MatrixXd reconstruct(const PodBasis& basis,
                            const Eigen::Ref<const Eigen::MatrixXd>& coeffs) {
    if (coeffs.cols() != basis.rank())
        throw InvalidInput("reconstruct: coefficient dimension does not match basis");
    return coeffs * basis.modes.transpose();
}

Scaler fit_scaler(const Eigen::Ref<const Eigen::MatrixXd>& rows, const FieldLayout& layout) {
    if (rows.rows() < 2) throw InvalidInput("fit_scaler: need at least 2 samples");
    const Eigen::Index n = rows.cols();
    Scaler s;
    s.mean = rows.colwise().mean();
    s.std.resize(n);
    s.passthrough.assign(static_cast<std::size_t>(n), 0);
    const double inv = 1.0 / static_cast<double>(rows.rows());
    for (Eigen::Index j = 0; j < n; ++j) {
        const double var = (rows.col(j).array() - s.mean[j]).square().sum() * inv;
        s.std[j] = std::sqrt(var);
        if (s.std[j] <= 1e-12) {
            s.passthrough[static_cast<std::size_t>(j)] = 1;
            s.mean[j] = 0.0;
            s.std[j] = 1.0;
        }
    }
    s.layout = layout;
    return s;
}

Eigen::MatrixXd apply_scaler(const Scaler& s, const Eigen::Ref<const Eigen::MatrixXd>& rows) {
    if (rows.cols() != s.dim()) throw InvalidInput("apply_scaler: dimension mismatch");
    return (rows.rowwise() - s.mean.transpose()).array().rowwise() /
           s.std.transpose().array();
}

Eigen::MatrixXd invert_scaler(const Scaler& s, const Eigen::Ref<const Eigen::MatrixXd>& rows) {
    if (rows.cols() != s.dim()) throw InvalidInput("invert_scaler: dimension mismatch");
    return (rows.array().rowwise() * s.std.transpose().array()).matrix().rowwise() +
           s.mean.transpose();
}

}  // namespace sparsebif
