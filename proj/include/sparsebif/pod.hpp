#pragma once

#include <Eigen/Core>
#include <vector>

#include "sparsebif/datagen.hpp"
#include "sparsebif/numkit.hpp"

namespace sparsebif {

enum class PodLevel { single, nested };

/// Orthonormal spatial modes with the singular-value spectrum of the stage
/// that produced them and, for nested bases, the per-parameter local ranks.
struct PodBasis {
    Eigen::MatrixXd modes;            // N_h x N
    Eigen::VectorXd singular_values;  // full spectrum, nonincreasing
    PodLevel level = PodLevel::single;
    std::vector<Eigen::Index> local_ranks;

    Eigen::Index rank() const { return modes.cols(); }
    Eigen::Index full_dim() const { return modes.rows(); }
};

/// Either keep the smallest N whose relative retained energy reaches 1 - delta,
/// or keep a fixed number of modes.
struct TruncationRule {
    enum class Mode { energy_tol, fixed_rank };
    Mode mode = Mode::energy_tol;
    double delta = 1e-6;
    Eigen::Index rank = 0;

    static TruncationRule energy(double delta);
    static TruncationRule fixed(Eigen::Index rank);
};

/// Smallest N with sum_{i<=N} s_i^2 / sum s_i^2 >= 1 - delta.
Eigen::Index truncation_rank(const Eigen::VectorXd& s, double delta);

/// POD of a columns-as-snapshots matrix. Modes are the leading left singular
/// vectors, sign-fixed so each mode's largest-magnitude entry is positive.
PodBasis pod(const Eigen::Ref<const Eigen::MatrixXd>& snapshots, const TruncationRule& rule);

/// Two-level POD: local per-parameter bases (ranks may differ), concatenated
/// and reduced once more by a global POD.
PodBasis nested_pod(const SnapshotSet& set, const TruncationRule& local_rule,
                    const TruncationRule& global_rule, int threads = 1);

/// Rows-as-states projection onto the basis and back.
Eigen::MatrixXd project(const PodBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& x_rows);
Eigen::MatrixXd reconstruct(const PodBasis& basis,
                            const Eigen::Ref<const Eigen::MatrixXd>& coeffs);

/// Per-column standardization (population convention). Columns whose standard
/// deviation is <= 1e-12 pass through untouched and are flagged. The field
/// layout is carried along so grouped diagnostics keep their names.
struct Scaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::vector<std::uint8_t> passthrough;
    FieldLayout layout;

    Eigen::Index dim() const { return mean.size(); }
};

Scaler fit_scaler(const Eigen::Ref<const Eigen::MatrixXd>& rows, const FieldLayout& layout = {});
Eigen::MatrixXd apply_scaler(const Scaler& s, const Eigen::Ref<const Eigen::MatrixXd>& rows);
Eigen::MatrixXd invert_scaler(const Scaler& s, const Eigen::Ref<const Eigen::MatrixXd>& rows);

}  // namespace sparsebif
