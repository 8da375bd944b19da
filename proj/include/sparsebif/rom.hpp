#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "sparsebif/autoenc.hpp"
#include "sparsebif/datagen.hpp"
#include "sparsebif/pod.hpp"
#include "sparsebif/sindy.hpp"

namespace sparsebif {

struct Provenance {
    std::string dataset_hash;
    std::uint64_t ae_seed = 0;
    std::uint64_t refit_seed = 0;
    std::string config_snapshot;
};

/// Complete offline artifact: linear compression, scaling, nonlinear
/// encoder/decoder, and the identified latent dynamics.
struct RomModel {
    PodBasis pod_basis;
    Scaler scaler;
    MlpParams encoder;
    MlpParams decoder;
    SindyModel latent_model;
    double window_t0 = 0.0;      // data window used at fit time
    double window_t1 = 0.0;
    double train_fraction = 1.0; // per-trajectory time-prefix split
    double resample_dt = 0.0;
    std::vector<double> train_params;  // parameter values seen at fit time
    Provenance provenance;

    Eigen::Index full_dim() const { return pod_basis.full_dim(); }
    Eigen::Index pod_dim() const { return pod_basis.rank(); }
    Eigen::Index latent_dim() const { return encoder.output_dim(); }
    /// End of the time range the latent model was trained on.
    double train_end() const;
    void validate() const;
};

struct OfflineConfig {
    TruncationRule local_rule = TruncationRule::energy(1e-6);
    TruncationRule global_rule = TruncationRule::energy(1e-5);
    double window_t0 = 0.0;
    double window_t1 = 0.0;
    double resample_dt = 0.0;
    double train_fraction = 0.9;
    std::vector<Eigen::Index> encoder_hidden;  // hidden widths only
    std::vector<Eigen::Index> decoder_hidden;  // empty: mirror of encoder_hidden
    Eigen::Index latent_dim = 2;
    LossWeights weights;
    TrainConfig ae;
    int finetune_epochs = 0;      // optional low-rate refinement phase
    double finetune_lr = 0.0;
    LibrarySpec refit_spec;        // state_dim is overwritten with latent_dim
    double refit_tau = 0.01;
    double refit_ridge = 1e-10;
    EnsembleConfig refit_ensemble;
    int threads = 1;
    std::string snapshot;          // free-form provenance note

    void validate() const;
};

/// Intermediate training package: windowed, projected, scaled, resampled
/// coefficient trajectories with derivatives and the prefix split.
struct PreparedData {
    TimeGrid resampled_grid;
    Eigen::Index train_rows_per_traj = 0;
    std::vector<Eigen::MatrixXd> coeffs;      // per parameter, scaled
    std::vector<Eigen::MatrixXd> coeffs_dot;  // central differences at resample_dt
};

/// Trajectories restricted to grid samples with time in [t0, t1].
SnapshotSet restrict_window(const SnapshotSet& set, double t0, double t1);

/// Projection/scaling/resampling/differentiation stage shared by offline_fit
/// and refit_latent_sindy.
PreparedData prepare_projected(const SnapshotSet& set, const PodBasis& basis,
                               const Scaler& scaler, double window_t0, double window_t1,
                               double resample_dt, double train_fraction);

/// Offline phase: nested POD, per-column scaling fit on training rows, spline
/// resampling, derivatives, joint SINDy-AE training on the per-trajectory time
/// prefixes, then a separate ensembled STLSQ refit on the frozen latent
/// coordinates. When AE training hits a non-finite loss, the model built from
/// the last good checkpoint is stored in checkpoint_on_failure (if given) and
/// NumericalFailure is thrown.
RomModel offline_fit(const SnapshotSet& set, const OfflineConfig& cfg,
                     std::vector<double>* loss_history = nullptr,
                     RomModel* checkpoint_on_failure = nullptr);

/// Online phase: encode the initial full-order state, integrate the latent
/// model with RK4, decode every step back to full order. t_end may exceed the
/// training window. On divergence the partial full-order rows ride along in
/// the exception.
Eigen::MatrixXd online_predict(const RomModel& model, const Eigen::VectorXd& x0, double mu,
                               double t0, double t_end, double dt);

/// Encoded latent trajectory of a full-order row batch (projection, scaling,
/// encoder), plus the decode back. Exposed for diagnostics and tests.
Eigen::MatrixXd encode_states(const RomModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& x_rows);
Eigen::MatrixXd decode_latent(const RomModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& z_rows);

/// Re-encode the data with the frozen autoencoder and refit the latent SINDy
/// model; everything else in the model is untouched.
RomModel refit_latent_sindy(const RomModel& model, const SnapshotSet& set,
                            const LibrarySpec& spec, double tau, const EnsembleConfig& cfg,
                            double ridge = 1e-10);

/// Single-document JSON model file, version tag "sparsebif-rom-v1"; numeric
/// payloads are base64-encoded little-endian f64 blocks. With
/// externalize_basis, the POD modes live in a sibling SNAP file referenced by
/// relative path and content hash.
void save_model(const RomModel& model, const std::filesystem::path& path,
                bool externalize_basis = false);
RomModel load_model(const std::filesystem::path& path);

}  // namespace sparsebif
