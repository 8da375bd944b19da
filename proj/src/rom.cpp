#include "sparsebif/rom.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "sparsebif/snapfile.hpp"

namespace sparsebif {

using nlohmann::json;

namespace {

Eigen::Index resample_count(double t0, double t1, double dt) {
    return static_cast<Eigen::Index>(std::floor((t1 - t0) / dt + 1e-9)) + 1;
}

Eigen::Index train_row_count(Eigen::Index total, double fraction) {
    if (fraction >= 1.0) return total;
    return std::min<Eigen::Index>(
        total, std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::llround(
                                             fraction * static_cast<double>(total)))));
}

}  // namespace

double RomModel::train_end() const {
    const Eigen::Index n = resample_count(window_t0, window_t1, resample_dt);
    const Eigen::Index k = train_row_count(n, train_fraction);
    return window_t0 + resample_dt * static_cast<double>(k - 1);
}

void RomModel::validate() const {
    encoder.validate();
    decoder.validate();
    if (encoder.input_dim() != pod_basis.rank() || decoder.output_dim() != pod_basis.rank())
        throw ConfigError("RomModel: POD rank does not match autoencoder width");
    if (scaler.dim() != pod_basis.rank())
        throw ConfigError("RomModel: scaler width does not match POD rank");
    if (encoder.output_dim() != decoder.input_dim())
        throw ConfigError("RomModel: encoder/decoder latent dims differ");
    if (latent_model.spec.state_dim != encoder.output_dim())
        throw ConfigError("RomModel: latent model state_dim does not match latent width");
    if (!(resample_dt > 0.0)) throw ConfigError("RomModel: resample_dt must be > 0");
    if (!(window_t1 > window_t0)) throw ConfigError("RomModel: empty training window");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw ConfigError("RomModel: train_fraction out of (0, 1]");
}

void OfflineConfig::validate() const {
    if (!(resample_dt > 0.0)) throw ConfigError("OfflineConfig: resample_dt must be > 0");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw ConfigError("OfflineConfig: train_fraction out of (0, 1]");
    if (!(window_t1 > window_t0)) throw ConfigError("OfflineConfig: empty time window");
    if (latent_dim < 1) throw ConfigError("OfflineConfig: latent_dim must be >= 1");
    if (refit_spec.param_dim == 1 && refit_spec.param_degree < 0)
        throw ConfigError("OfflineConfig: bad refit library");
    ae.validate();
}

SnapshotSet restrict_window(const SnapshotSet& set, double t0, double t1) {
    if (!(t1 > t0)) throw InvalidInput("restrict_window: empty window");
    const TimeGrid& g = set.grid;
    const double eps = 1e-9 * g.dt;
    if (t0 < g.t0 - eps || t1 > g.t_end() + eps)
        throw InvalidInput("restrict_window: window exceeds data range");
    const auto i0 = static_cast<Eigen::Index>(std::ceil((t0 - g.t0) / g.dt - 1e-9));
    const auto i1 = static_cast<Eigen::Index>(std::floor((t1 - g.t0) / g.dt + 1e-9));
    if (i1 - i0 + 1 < 2) throw InvalidInput("restrict_window: fewer than 2 samples in window");

    SnapshotSet out;
    out.params = set.params;
    out.grid = TimeGrid(g.time(i0), g.dt, i1 - i0 + 1);
    out.field_layout = set.field_layout;
    out.meta = set.meta;
    out.trajectories.reserve(set.trajectories.size());
    for (std::size_t m = 0; m < set.trajectories.size(); ++m) {
        out.trajectories.push_back(set.trajectories[m].middleRows(i0, i1 - i0 + 1));
        if (m < out.meta.stop_index.size()) {
            Eigen::Index s = out.meta.stop_index[m] - i0;
            out.meta.stop_index[m] = std::clamp<Eigen::Index>(s, 0, i1 - i0);
        }
    }
    return out;
}

PreparedData prepare_projected(const SnapshotSet& set, const PodBasis& basis,
                               const Scaler& scaler, double window_t0, double window_t1,
                               double resample_dt, double train_fraction) {
    SnapshotSet windowed = restrict_window(set, window_t0, window_t1);
    if (windowed.grid.count < 3)
        throw InvalidInput("prepare_projected: window too short for splines");

    PreparedData out;
    const Eigen::Index n_rs = resample_count(windowed.grid.t0, windowed.grid.t_end(),
                                             resample_dt);
    if (n_rs < 3) throw InvalidInput("prepare_projected: resample grid too short");
    out.resampled_grid = TimeGrid(windowed.grid.t0, resample_dt, n_rs);
    out.train_rows_per_traj = train_row_count(n_rs, train_fraction);

    for (const auto& traj : windowed.trajectories) {
        Eigen::MatrixXd coeffs = apply_scaler(scaler, project(basis, traj));
        CubicSplineSet spline(windowed.grid, coeffs);
        Eigen::MatrixXd resampled = spline.resample(out.resampled_grid);
        out.coeffs_dot.push_back(central_diff(resampled, resample_dt));
        out.coeffs.push_back(std::move(resampled));
    }
    return out;
}

namespace {

TrainDataset stack_training_rows(const PreparedData& prep, const std::vector<double>& params) {
    const Eigen::Index per = prep.train_rows_per_traj;
    const Eigen::Index n_traj = static_cast<Eigen::Index>(prep.coeffs.size());
    const Eigen::Index width = prep.coeffs[0].cols();
    TrainDataset data;
    data.x.resize(per * n_traj, width);
    data.xdot.resize(per * n_traj, width);
    data.mu.resize(per * n_traj);
    for (Eigen::Index m = 0; m < n_traj; ++m) {
        data.x.middleRows(m * per, per) = prep.coeffs[static_cast<std::size_t>(m)].topRows(per);
        data.xdot.middleRows(m * per, per) =
            prep.coeffs_dot[static_cast<std::size_t>(m)].topRows(per);
        data.mu.segment(m * per, per).setConstant(params[static_cast<std::size_t>(m)]);
    }
    return data;
}

SindyModel fit_latent_model(const RomModel& model, const PreparedData& prep,
                            const std::vector<double>& params, const LibrarySpec& spec_in,
                            double tau, double ridge, const EnsembleConfig& cfg) {
    LibrarySpec spec = spec_in;
    spec.state_dim = static_cast<int>(model.latent_dim());
    spec.validate();

    const Eigen::Index per = prep.train_rows_per_traj;
    const Eigen::Index n_traj = static_cast<Eigen::Index>(prep.coeffs.size());
    Eigen::MatrixXd z(per * n_traj, model.latent_dim());
    Eigen::MatrixXd zdot(per * n_traj, model.latent_dim());
    Eigen::VectorXd mu(per * n_traj);
    for (Eigen::Index m = 0; m < n_traj; ++m) {
        // Latent derivatives by the chain rule through the frozen encoder,
        // the same construction the joint loss trains against.
        MlpForward fwd = forward(model.encoder, prep.coeffs[static_cast<std::size_t>(m)]);
        MlpTangent tan = jvp_forward(model.encoder, fwd,
                                     prep.coeffs_dot[static_cast<std::size_t>(m)]);
        z.middleRows(m * per, per) = fwd.output().topRows(per);
        zdot.middleRows(m * per, per) = tan.output().topRows(per);
        mu.segment(m * per, per).setConstant(params[static_cast<std::size_t>(m)]);
    }

    Eigen::MatrixXd theta = build_library(z, mu, spec);
    SparseFit fit = ensemble_stlsq(theta, zdot, tau, ridge, cfg);

    // The aggregated ensemble selects a robust support; entrywise medians of
    // bootstrap fits are poor coefficients on collinear libraries, so the
    // final values come from one least-squares restricted to that support.
    for (Eigen::Index k = 0; k < fit.xi.cols(); ++k) {
        std::vector<Eigen::Index> support;
        for (Eigen::Index i = 0; i < fit.xi.rows(); ++i)
            if (fit.xi(i, k) != 0.0) support.push_back(i);
        if (support.empty()) continue;
        Eigen::MatrixXd sub(theta.rows(), static_cast<Eigen::Index>(support.size()));
        for (std::size_t j = 0; j < support.size(); ++j)
            sub.col(static_cast<Eigen::Index>(j)) = theta.col(support[j]);
        Eigen::VectorXd coef = least_squares(sub, zdot.col(k), ridge);
        fit.xi.col(k).setZero();
        for (std::size_t j = 0; j < support.size(); ++j) {
            const double v = coef[static_cast<Eigen::Index>(j)];
            if (std::abs(v) >= tau) fit.xi(support[j], k) = v;
        }
    }

    SindyModel latent;
    latent.spec = spec;
    latent.xi = std::move(fit.xi);
    latent.threshold = tau;
    for (std::size_t k = 0; k < fit.column_zeroed.size(); ++k)
        if (fit.column_zeroed[k])
            latent.notes += "latent equation " + std::to_string(k) + " has empty support; ";
    return latent;
}

}  // namespace

RomModel offline_fit(const SnapshotSet& set, const OfflineConfig& cfg,
                     std::vector<double>* loss_history, RomModel* checkpoint_on_failure) {
    cfg.validate();
    set.validate();
    if (set.trajectories.empty()) throw InvalidInput("offline_fit: empty dataset");

    SnapshotSet windowed = restrict_window(set, cfg.window_t0, cfg.window_t1);
    if (windowed.grid.count < 4) throw InvalidInput("offline_fit: window too short");

    PodBasis basis = nested_pod(windowed, cfg.local_rule, cfg.global_rule, cfg.threads);

    // Scaler statistics come from training rows only (the per-trajectory
    // time prefix), then apply everywhere.
    const Eigen::Index n_train_w = train_row_count(windowed.grid.count, cfg.train_fraction);
    Eigen::MatrixXd train_stack(n_train_w * static_cast<Eigen::Index>(windowed.trajectories.size()),
                                basis.rank());
    for (std::size_t m = 0; m < windowed.trajectories.size(); ++m)
        train_stack.middleRows(static_cast<Eigen::Index>(m) * n_train_w, n_train_w) =
            project(basis, windowed.trajectories[m].topRows(n_train_w));
    Scaler scaler = fit_scaler(train_stack, {{"z", 0, basis.rank()}});

    PreparedData prep = prepare_projected(set, basis, scaler, cfg.window_t0, cfg.window_t1,
                                          cfg.resample_dt, cfg.train_fraction);
    TrainDataset data = stack_training_rows(prep, set.params);

    std::vector<Eigen::Index> enc_dims;
    enc_dims.push_back(basis.rank());
    enc_dims.insert(enc_dims.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
    enc_dims.push_back(cfg.latent_dim);
    std::vector<Eigen::Index> dec_dims;
    dec_dims.push_back(cfg.latent_dim);
    if (cfg.decoder_hidden.empty()) {
        dec_dims.insert(dec_dims.end(), cfg.encoder_hidden.rbegin(), cfg.encoder_hidden.rend());
    } else {
        dec_dims.insert(dec_dims.end(), cfg.decoder_hidden.begin(), cfg.decoder_hidden.end());
    }
    dec_dims.push_back(basis.rank());

    LibrarySpec joint_spec = cfg.refit_spec;
    joint_spec.state_dim = static_cast<int>(cfg.latent_dim);
    joint_spec.validate();

    TrainResult trained = train(data, enc_dims, dec_dims, joint_spec, cfg.weights, cfg.ae);
    if (cfg.finetune_epochs > 0 && !trained.aborted) {
        TrainConfig fine = cfg.ae;
        fine.epochs = cfg.finetune_epochs;
        fine.learning_rate = cfg.finetune_lr > 0.0 ? cfg.finetune_lr
                                                   : 0.1 * cfg.ae.learning_rate;
        TrainResult refined = train(data, enc_dims, dec_dims, joint_spec, cfg.weights, fine,
                                    &trained);
        refined.loss_history.insert(refined.loss_history.begin(),
                                    trained.loss_history.begin(),
                                    trained.loss_history.end());
        trained = std::move(refined);
    }
    if (loss_history != nullptr) *loss_history = trained.loss_history;

    RomModel model;
    model.pod_basis = std::move(basis);
    model.scaler = std::move(scaler);
    model.encoder = std::move(trained.encoder);
    model.decoder = std::move(trained.decoder);
    model.window_t0 = cfg.window_t0;
    model.window_t1 = cfg.window_t1;
    model.train_fraction = cfg.train_fraction;
    model.resample_dt = cfg.resample_dt;
    model.train_params = set.params;
    model.provenance.dataset_hash = dataset_hash(set);
    model.provenance.ae_seed = cfg.ae.seed;
    model.provenance.refit_seed = cfg.refit_ensemble.seed;
    model.provenance.config_snapshot = cfg.snapshot;

    model.latent_model = fit_latent_model(model, prep, set.params, cfg.refit_spec,
                                          cfg.refit_tau, cfg.refit_ridge, cfg.refit_ensemble);
    model.validate();

    if (trained.aborted) {
        // The returned parameters are the last finite-loss checkpoint; hand the
        // usable model to the caller and report the failure.
        if (checkpoint_on_failure != nullptr) *checkpoint_on_failure = model;
        throw NumericalFailure("offline_fit: AE training hit a non-finite loss after epoch " +
                               std::to_string(trained.completed_epochs));
    }
    return model;
}

Eigen::MatrixXd encode_states(const RomModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& x_rows) {
    return apply(model.encoder, apply_scaler(model.scaler, project(model.pod_basis, x_rows)));
}

Eigen::MatrixXd decode_latent(const RomModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& z_rows) {
    return reconstruct(model.pod_basis,
                       invert_scaler(model.scaler, apply(model.decoder, z_rows)));
}

Eigen::MatrixXd online_predict(const RomModel& model, const Eigen::VectorXd& x0, double mu,
                               double t0, double t_end, double dt) {
    model.validate();
    if (x0.size() != model.full_dim()) throw InvalidInput("online_predict: x0 dimension mismatch");
    if (!(t_end > t0) || !(dt > 0.0)) throw InvalidInput("online_predict: bad horizon");
    const auto steps = static_cast<Eigen::Index>(std::llround((t_end - t0) / dt));
    if (steps < 1) throw InvalidInput("online_predict: horizon shorter than one step");
    TimeGrid grid(t0, dt, steps + 1);

    Eigen::MatrixXd z0 = encode_states(model, x0.transpose());
    try {
        Eigen::MatrixXd z = simulate(model.latent_model, z0.row(0).transpose(), mu, grid);
        return decode_latent(model, z);
    } catch (const DivergedTrajectory& e) {
        Eigen::MatrixXd partial;
        if (e.partial.rows() > 0) partial = decode_latent(model, e.partial);
        throw DivergedTrajectory(std::string("online_predict: ") + e.what(),
                                 e.last_valid_index, std::move(partial));
    }
}

RomModel refit_latent_sindy(const RomModel& model, const SnapshotSet& set,
                            const LibrarySpec& spec, double tau, const EnsembleConfig& cfg,
                            double ridge) {
    model.validate();
    PreparedData prep = prepare_projected(set, model.pod_basis, model.scaler, model.window_t0,
                                          model.window_t1, model.resample_dt,
                                          model.train_fraction);
    RomModel out = model;
    out.latent_model = fit_latent_model(model, prep, set.params, spec, tau, ridge, cfg);
    out.provenance.refit_seed = cfg.seed;
    return out;
}

namespace {

json mlp_to_json(const MlpParams& p) {
    json doc;
    json dims = json::array();
    for (auto d : p.dims()) dims.push_back(d);
    doc["dims"] = dims;
    doc["activation"] = "elu-hidden/identity-output";
    json ws = json::array(), bs = json::array();
    for (const auto& w : p.w) ws.push_back(matrix_to_base64(w));
    for (const auto& b : p.b) bs.push_back(matrix_to_base64(b));
    doc["weights"] = ws;
    doc["biases"] = bs;
    return doc;
}

MlpParams mlp_from_json(const json& doc) {
    MlpParams p;
    const auto dims = doc.at("dims").get<std::vector<Eigen::Index>>();
    const auto& ws = doc.at("weights");
    const auto& bs = doc.at("biases");
    if (dims.size() < 2 || ws.size() != dims.size() - 1 || bs.size() != dims.size() - 1)
        throw FormatError("model: malformed network block");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        p.w.push_back(base64_to_matrix(ws[l].get<std::string>(), dims[l + 1], dims[l]));
        p.b.push_back(base64_to_matrix(bs[l].get<std::string>(), dims[l + 1], 1));
    }
    p.validate();
    return p;
}

json vector_to_json_b64(const Eigen::VectorXd& v) {
    json doc;
    doc["size"] = v.size();
    doc["data"] = matrix_to_base64(v);
    return doc;
}

Eigen::VectorXd vector_from_json_b64(const json& doc) {
    const auto n = doc.at("size").get<Eigen::Index>();
    return base64_to_matrix(doc.at("data").get<std::string>(), n, 1);
}

constexpr const char* kModelVersion = "sparsebif-rom-v1";

}  // namespace

void save_model(const RomModel& model, const std::filesystem::path& path,
                bool externalize_basis) {
    model.validate();
    json doc;
    doc["version"] = kModelVersion;

    json basis;
    basis["rows"] = model.pod_basis.modes.rows();
    basis["cols"] = model.pod_basis.modes.cols();
    basis["level"] = model.pod_basis.level == PodLevel::nested ? "nested" : "single";
    basis["local_ranks"] = model.pod_basis.local_ranks;
    basis["singular_values"] = vector_to_json_b64(model.pod_basis.singular_values);
    if (externalize_basis) {
        const std::string snap_name = path.stem().string() + ".pod.snap";
        write_snapfile(path.parent_path() / snap_name, model.pod_basis.modes);
        basis["external"] = {{"path", snap_name},
                             {"crc32", snapshot_crc(model.pod_basis.modes)}};
    } else {
        basis["modes"] = matrix_to_base64(model.pod_basis.modes);
    }
    doc["pod_basis"] = basis;

    json scaler;
    scaler["mean"] = vector_to_json_b64(model.scaler.mean);
    scaler["std"] = vector_to_json_b64(model.scaler.std);
    scaler["passthrough"] = model.scaler.passthrough;
    json layout = json::array();
    for (const auto& f : model.scaler.layout)
        layout.push_back({{"name", f.name}, {"offset", f.offset}, {"size", f.size}});
    scaler["layout"] = layout;
    doc["scaler"] = scaler;

    doc["encoder"] = mlp_to_json(model.encoder);
    doc["decoder"] = mlp_to_json(model.decoder);

    json latent;
    latent["spec"] = {{"state_dim", model.latent_model.spec.state_dim},
                      {"param_dim", model.latent_model.spec.param_dim},
                      {"state_degree", model.latent_model.spec.state_degree},
                      {"param_degree", model.latent_model.spec.param_degree},
                      {"include_bias", model.latent_model.spec.include_bias}};
    latent["xi_rows"] = model.latent_model.xi.rows();
    latent["xi_cols"] = model.latent_model.xi.cols();
    latent["xi"] = matrix_to_base64(model.latent_model.xi);
    latent["threshold"] = model.latent_model.threshold;
    latent["notes"] = model.latent_model.notes;
    doc["latent_model"] = latent;

    doc["window_t0"] = model.window_t0;
    doc["window_t1"] = model.window_t1;
    doc["train_fraction"] = model.train_fraction;
    doc["resample_dt"] = model.resample_dt;
    doc["train_params"] = model.train_params;
    doc["provenance"] = {{"dataset_hash", model.provenance.dataset_hash},
                         {"ae_seed", model.provenance.ae_seed},
                         {"refit_seed", model.provenance.refit_seed},
                         {"config", model.provenance.config_snapshot}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("short write to " + path.string());
}

RomModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(std::string((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>()));
    } catch (const json::parse_error& e) {
        throw FormatError("model: " + std::string(e.what()), e.byte);
    }
    if (!doc.contains("version")) throw FormatError("model: missing version tag");
    if (doc.at("version").get<std::string>() != kModelVersion)
        throw VersionError("model: unsupported version " +
                           doc.at("version").get<std::string>());

    try {
        RomModel model;
        const auto& basis = doc.at("pod_basis");
        const auto rows = basis.at("rows").get<Eigen::Index>();
        const auto cols = basis.at("cols").get<Eigen::Index>();
        if (basis.contains("external")) {
            const auto& ext = basis.at("external");
            const auto snap = path.parent_path() / ext.at("path").get<std::string>();
            model.pod_basis.modes = read_snapfile(snap);
            if (model.pod_basis.modes.rows() != rows || model.pod_basis.modes.cols() != cols)
                throw FormatError("model: external basis shape mismatch");
            if (snapshot_crc(model.pod_basis.modes) != ext.at("crc32").get<std::uint32_t>())
                throw FormatError("model: external basis content hash mismatch");
        } else {
            model.pod_basis.modes = base64_to_matrix(basis.at("modes").get<std::string>(),
                                                     rows, cols);
        }
        model.pod_basis.singular_values = vector_from_json_b64(basis.at("singular_values"));
        model.pod_basis.level = basis.at("level").get<std::string>() == "nested"
                                    ? PodLevel::nested
                                    : PodLevel::single;
        model.pod_basis.local_ranks =
            basis.at("local_ranks").get<std::vector<Eigen::Index>>();

        const auto& scaler = doc.at("scaler");
        model.scaler.mean = vector_from_json_b64(scaler.at("mean"));
        model.scaler.std = vector_from_json_b64(scaler.at("std"));
        model.scaler.passthrough = scaler.at("passthrough").get<std::vector<std::uint8_t>>();
        for (const auto& f : scaler.at("layout"))
            model.scaler.layout.push_back({f.at("name").get<std::string>(),
                                           f.at("offset").get<Eigen::Index>(),
                                           f.at("size").get<Eigen::Index>()});

        model.encoder = mlp_from_json(doc.at("encoder"));
        model.decoder = mlp_from_json(doc.at("decoder"));

        const auto& latent = doc.at("latent_model");
        const auto& spec = latent.at("spec");
        model.latent_model.spec.state_dim = spec.at("state_dim").get<int>();
        model.latent_model.spec.param_dim = spec.at("param_dim").get<int>();
        model.latent_model.spec.state_degree = spec.at("state_degree").get<int>();
        model.latent_model.spec.param_degree = spec.at("param_degree").get<int>();
        model.latent_model.spec.include_bias = spec.at("include_bias").get<bool>();
        model.latent_model.xi = base64_to_matrix(latent.at("xi").get<std::string>(),
                                                 latent.at("xi_rows").get<Eigen::Index>(),
                                                 latent.at("xi_cols").get<Eigen::Index>());
        model.latent_model.threshold = latent.at("threshold").get<double>();
        model.latent_model.notes = latent.at("notes").get<std::string>();

        model.window_t0 = doc.at("window_t0").get<double>();
        model.window_t1 = doc.at("window_t1").get<double>();
        model.train_fraction = doc.at("train_fraction").get<double>();
        model.resample_dt = doc.at("resample_dt").get<double>();
        model.train_params = doc.at("train_params").get<std::vector<double>>();
        const auto& prov = doc.at("provenance");
        model.provenance.dataset_hash = prov.at("dataset_hash").get<std::string>();
        model.provenance.ae_seed = prov.at("ae_seed").get<std::uint64_t>();
        model.provenance.refit_seed = prov.at("refit_seed").get<std::uint64_t>();
        model.provenance.config_snapshot = prov.at("config").get<std::string>();

        model.validate();
        return model;
    } catch (const json::exception& e) {
        throw FormatError("model: " + std::string(e.what()));
    }
}

}  // namespace sparsebif
