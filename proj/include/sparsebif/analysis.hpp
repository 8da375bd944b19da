#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "sparsebif/datagen.hpp"
#include "sparsebif/rom.hpp"

namespace sparsebif {

/// Scalar functional of the state used for bifurcation diagrams.
struct QoiSpec {
    enum class Kind { point_value, field_l2norm, kinetic_energy };
    Kind kind = Kind::point_value;
    std::string field;          // point_value / field_l2norm
    Eigen::Index index = 0;     // point_value: index within the field slice
    Eigen::VectorXd weights;    // optional quadrature analog
};

/// E(t_i) = 1/2 sum_j w_j u_j(t_i)^2 over the given slices (unit weights when
/// `weights` is empty).
Eigen::VectorXd kinetic_energy(const Eigen::Ref<const Eigen::MatrixXd>& traj,
                               const FieldLayout& velocity_slices,
                               const Eigen::VectorXd& weights = {});

/// max - min over the supplied window.
double amplitude(const Eigen::VectorXd& series);

/// Per-time-sample scalar according to the spec.
Eigen::VectorXd qoi(const Eigen::Ref<const Eigen::MatrixXd>& traj, const FieldLayout& layout,
                    const QoiSpec& spec);

struct Diagram {
    std::vector<double> params;
    std::vector<double> values;
    std::vector<std::uint8_t> diverged;  // marked, never dropped
};

enum class DiagramMode { final_value, amplitude };

/// Diagram from stored data. final_value samples the last non-padded row
/// (using the recorded stop indices); amplitude uses the trailing
/// window_fraction of the non-padded series.
Diagram bifurcation_diagram(const SnapshotSet& set, const QoiSpec& spec, DiagramMode mode,
                            double window_fraction = 0.25);

/// Diagram from online predictions: one trajectory per parameter, starting
/// from the matching row of x0_rows.
Diagram bifurcation_diagram(const RomModel& model, const std::vector<double>& params,
                            const Eigen::Ref<const Eigen::MatrixXd>& x0_rows,
                            const FieldLayout& layout, const QoiSpec& spec, DiagramMode mode,
                            double t0, double t_end, double dt,
                            double window_fraction = 0.25, int threads = 1);

struct Spectrum {
    Eigen::VectorXd frequency;  // k / (N dt), k = 0..N/2
    Eigen::VectorXd power;      // |X_k|^2 / N, one-sided, interior bins doubled
    double dt = 0.0;
    Eigen::Index window_length = 0;
};

/// One-sided power spectral density. Power-of-two lengths use an iterative
/// radix-2 FFT; other lengths fall back to the direct O(N^2) transform.
Spectrum psd(const Eigen::VectorXd& signal, double dt);

/// Row i is [s(i), s(i+lag), ..., s(i+(m-1) lag)].
Eigen::MatrixXd delay_embed(const Eigen::VectorXd& signal, Eigen::Index lag, Eigen::Index m);

/// First index n with ||x_{n+1} - x_n|| / ||x_n|| < tol; rows with zero norm
/// skip the test. Empty when the criterion never fires.
std::optional<Eigen::Index> steady_state_time(const Eigen::Ref<const Eigen::MatrixXd>& traj,
                                              double tol);

}  // namespace sparsebif
