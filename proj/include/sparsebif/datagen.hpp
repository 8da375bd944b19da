#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "sparsebif/numkit.hpp"

namespace sparsebif {

enum class SystemKind { PitchforkNormalForm, HopfNormalForm, Lorenz };

std::string to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

/// Synthetic full-order system: a normal form with known bifurcation structure
/// plus fast stable transverse modes, embedded into N_h dimensions by a lift map.
struct FomSystem {
    SystemKind kind = SystemKind::PitchforkNormalForm;
    double mu_star = 0.96;        // critical parameter value
    double omega = 1.0;           // angular frequency (Hopf only)
    int transverse_dims = 3;      // fast stable extra latent dimensions
    double transverse_rate = 10.0;

    Eigen::Index dim() const;
    void validate() const;
};

/// x = q y + nonlinear_gain * q2 (y .* y). The blocks [q q2] are built jointly
/// orthonormal, so q^T x recovers y exactly and the embedded full-order vector
/// field stays well-defined.
struct LiftMap {
    Eigen::MatrixXd q;   // N_h x d, orthonormal columns
    Eigen::MatrixXd q2;  // N_h x d, orthonormal, orthogonal to q
    double nonlinear_gain = 0.0;

    Eigen::Index full_dim() const { return q.rows(); }
    Eigen::Index latent_dim() const { return q.cols(); }
};

LiftMap make_lift_map(Eigen::Index n_h, Eigen::Index latent_dim, double nonlinear_gain, Rng& rng);

/// Named contiguous column ranges of the full state vector.
struct FieldSlice {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
};
using FieldLayout = std::vector<FieldSlice>;

/// Partition [0, n_h) into equal-ish slices with the given names.
FieldLayout default_field_layout(Eigen::Index n_h, const std::vector<std::string>& names = {
                                                       "u1", "u2", "p"});
const FieldSlice& find_field(const FieldLayout& layout, const std::string& name);

struct DatasetMeta {
    std::string system_kind;
    double mu_star = 0.0;
    double omega = 0.0;
    int transverse_dims = 0;
    double transverse_rate = 0.0;
    double nonlinear_gain = 0.0;
    std::uint64_t seed = 0;
    double stop_tol = 0.0;                  // 0 means no early stop
    std::vector<Eigen::Index> stop_index;   // per parameter: last simulated row
};

/// Parameterized snapshot collection; one (count x N_h) trajectory per parameter.
struct SnapshotSet {
    std::vector<double> params;   // strictly increasing
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> trajectories;
    FieldLayout field_layout;
    DatasetMeta meta;

    Eigen::Index full_dim() const { return trajectories.empty() ? 0 : trajectories[0].cols(); }
    void validate() const;
};

/// Right-hand side of the latent normal form.
/// Pitchfork: y0' = (mu_star - mu) y0 - y0^3.
/// Hopf (Cartesian): y0' = a y0 - w y1 - y0 r^2, y1' = w y0 + a y1 - y1 r^2,
/// a = mu - mu_star, r^2 = y0^2 + y1^2.
/// Transverse dims decay as y_k' = -transverse_rate * y_k.
/// Lorenz uses the classic (10, 28, 8/3) parameters and ignores mu.
Eigen::VectorXd latent_rhs(const FomSystem& system, double t, const Eigen::VectorXd& y, double mu);

struct SimResult {
    Eigen::MatrixXd traj;        // rows 0..stop_index are simulated states
    Eigen::Index stop_index = 0; // last computed row
    bool stopped_early = false;
};

/// RK4 run of the latent system. With stop_tol > 0, integration ends at the
/// first step whose relative update ||y_{n+1}-y_n||/||y_n|| drops below the
/// tolerance (the test is skipped while ||y_n|| = 0).
SimResult simulate_fom(const FomSystem& system, double mu, const TimeGrid& grid,
                       const Eigen::VectorXd& y0, double stop_tol = 0.0);

/// Embedded full-order vector field at x in R^{N_h}; used to time the genuine
/// full-order integration against the reduced model.
Eigen::VectorXd fom_rhs_full(const FomSystem& system, const LiftMap& map, double t,
                             const Eigen::VectorXd& x, double mu);

/// Rows are lifted states: q y + gain * q2 (y .* y).
Eigen::MatrixXd lift(const Eigen::Ref<const Eigen::MatrixXd>& latent_rows, const LiftMap& map);

/// Repeat the final row until the trajectory has target_count rows.
Eigen::MatrixXd pad_to_final(const Eigen::Ref<const Eigen::MatrixXd>& traj,
                             Eigen::Index target_count);

/// Full dataset protocol: per parameter, simulate (with a seeded asymmetric
/// initial perturbation so branch selection is deterministic), pad to the full
/// grid, and lift. Trajectories are ordered by `params` for any thread count.
SnapshotSet generate_dataset(const FomSystem& system, const std::vector<double>& params,
                             const TimeGrid& grid, const LiftMap& map, Rng& rng,
                             double stop_tol = 0.0, int threads = 1);

}  // namespace sparsebif
