// sparsebif command-line tool: generate synthetic bifurcating datasets, train
// reduced models, predict trajectories, and export diagnostics.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "sparsebif/analysis.hpp"
#include "sparsebif/datagen.hpp"
#include "sparsebif/rom.hpp"
#include "sparsebif/runconfig.hpp"
#include "sparsebif/snapfile.hpp"

namespace fs = std::filesystem;
using namespace sparsebif;

namespace {

int env_threads() {
    const char* v = std::getenv("SPARSEBIF_THREADS");
    if (v == nullptr || *v == '\0') return 1;
    const long n = std::strtol(v, nullptr, 10);
    return n <= 0 ? 0 : static_cast<int>(n);  // 0 = auto
}

FomSystem system_from_config(const RunConfig& cfg) {
    FomSystem sys;
    sys.kind = system_kind_from_string(cfg.get_string("system.kind"));
    sys.mu_star = cfg.get_number("system.mu_star", 0.96);
    sys.omega = cfg.get_number("system.omega", 1.0);
    sys.transverse_dims = static_cast<int>(cfg.get_int("system.transverse_dims", 3));
    sys.transverse_rate = cfg.get_number("system.transverse_rate", 10.0);
    sys.validate();
    return sys;
}

std::vector<double> params_from_config(const RunConfig& cfg) {
    if (cfg.has("system.params")) return cfg.get_array("system.params");
    cfg.require({"system.param_min", "system.param_max", "system.param_count"});
    const double lo = cfg.get_number("system.param_min");
    const double hi = cfg.get_number("system.param_max");
    const auto n = cfg.get_int("system.param_count");
    if (n < 1 || !(hi >= lo)) throw ConfigError("config: bad parameter range");
    std::vector<double> params;
    for (std::int64_t i = 0; i < n; ++i)
        params.push_back(n == 1 ? lo
                                : lo + (hi - lo) * static_cast<double>(i) /
                                      static_cast<double>(n - 1));
    return params;
}

TruncationRule rule_from_config(const RunConfig& cfg, const std::string& which,
                                double default_delta) {
    const std::string delta_key = "pod." + which + "_delta";
    const std::string rank_key = "pod." + which + "_rank";
    if (cfg.has(delta_key) && cfg.has(rank_key))
        throw ConfigError("config: give " + delta_key + " or " + rank_key + ", not both");
    if (cfg.has(rank_key)) return TruncationRule::fixed(cfg.get_int(rank_key));
    return TruncationRule::energy(cfg.get_number(delta_key, default_delta));
}

OfflineConfig offline_from_config(const RunConfig& cfg) {
    cfg.require({"ae.encoder_hidden", "ae.latent_dim", "ae.epochs", "ae.window_t0",
                 "ae.window_t1", "ae.resample_dt", "sindy.state_degree"});
    OfflineConfig off;
    off.local_rule = rule_from_config(cfg, "local", 1e-6);
    off.global_rule = rule_from_config(cfg, "global", 1e-5);
    off.window_t0 = cfg.get_number("ae.window_t0");
    off.window_t1 = cfg.get_number("ae.window_t1");
    off.resample_dt = cfg.get_number("ae.resample_dt");
    off.train_fraction = cfg.get_number("ae.train_fraction", 0.9);
    for (double d : cfg.get_array("ae.encoder_hidden"))
        off.encoder_hidden.push_back(static_cast<Eigen::Index>(d));
    for (double d : cfg.get_array("ae.decoder_hidden", {}))
        off.decoder_hidden.push_back(static_cast<Eigen::Index>(d));
    off.latent_dim = cfg.get_int("ae.latent_dim");
    off.weights.lambda1 = cfg.get_number("ae.lambda1", 0.0);
    off.weights.lambda2 = cfg.get_number("ae.lambda2", 0.0);
    off.weights.lambda3 = cfg.get_number("ae.lambda3", 0.0);
    off.ae.epochs = static_cast<int>(cfg.get_int("ae.epochs"));
    off.ae.learning_rate = cfg.get_number("ae.learning_rate", 1e-5);
    off.ae.batch_size = static_cast<int>(cfg.get_int("ae.batch_size", 64));
    off.ae.seed = cfg.get_u64("ae.seed", 0);
    off.ae.shuffle = cfg.get_bool("ae.shuffle", true);
    off.finetune_epochs = static_cast<int>(cfg.get_int("ae.finetune_epochs", 0));
    off.finetune_lr = cfg.get_number("ae.finetune_lr", 0.0);

    off.refit_spec.param_dim = cfg.get_int("sindy.param_degree", 2) > 0 ? 1 : 0;
    off.refit_spec.state_degree = static_cast<int>(cfg.get_int("sindy.state_degree"));
    off.refit_spec.param_degree = static_cast<int>(cfg.get_int("sindy.param_degree", 2));
    off.refit_spec.include_bias = cfg.get_bool("sindy.include_bias", true);
    off.refit_tau = cfg.get_number("sindy.threshold", 0.01);
    off.refit_ridge = cfg.get_number("sindy.ridge", 1e-10);
    off.refit_ensemble.n_models = static_cast<int>(cfg.get_int("sindy.ensemble_models", 20));
    off.refit_ensemble.sample_fraction = cfg.get_number("sindy.sample_fraction", 0.9);
    off.refit_ensemble.library_drop_count =
        static_cast<int>(cfg.get_int("sindy.library_drop", 1));
    const std::string agg = cfg.get_string("sindy.aggregation", "median");
    if (agg == "median") {
        off.refit_ensemble.aggregation = EnsembleConfig::Aggregation::median;
    } else if (agg == "mean") {
        off.refit_ensemble.aggregation = EnsembleConfig::Aggregation::mean;
    } else {
        throw ConfigError("config: sindy.aggregation must be median or mean");
    }
    off.refit_ensemble.seed = cfg.get_u64("sindy.seed", 0);
    off.threads = env_threads();
    return off;
}

QoiSpec qoi_from_flags(const std::string& kind, const std::string& field, Eigen::Index index,
                       const std::string& weights, const FieldLayout& layout) {
    QoiSpec spec;
    if (kind == "point") {
        spec.kind = QoiSpec::Kind::point_value;
    } else if (kind == "l2norm") {
        spec.kind = QoiSpec::Kind::field_l2norm;
    } else if (kind == "energy") {
        spec.kind = QoiSpec::Kind::kinetic_energy;
    } else {
        throw ConfigError("--qoi must be point, l2norm, or energy");
    }
    spec.field = field;
    spec.index = index;
    if (weights == "ramp") {
        Eigen::Index total = 0;
        for (const auto& s : layout) total += s.size;
        spec.weights.resize(total);
        for (Eigen::Index j = 0; j < total; ++j)
            spec.weights[j] = 1.0 + static_cast<double>(j) / static_cast<double>(total - 1);
    } else if (weights != "uniform") {
        throw ConfigError("--weights must be uniform or ramp");
    }
    return spec;
}

DiagramMode mode_from_flag(const std::string& mode) {
    if (mode == "final") return DiagramMode::final_value;
    if (mode == "amplitude") return DiagramMode::amplitude;
    throw ConfigError("--mode must be final or amplitude");
}

Eigen::VectorXd read_x0(const std::string& spec, double mu, double t0,
                        const std::string& data_dir) {
    if (spec == "from-data") {
        if (data_dir.empty()) throw ConfigError("--x0 from-data requires --data");
        SnapshotSet set = read_dataset(data_dir);
        std::size_t best = 0;
        for (std::size_t m = 1; m < set.params.size(); ++m)
            if (std::abs(set.params[m] - mu) < std::abs(set.params[best] - mu)) best = m;
        const auto row = static_cast<Eigen::Index>(
            std::llround((t0 - set.grid.t0) / set.grid.dt));
        if (row < 0 || row >= set.grid.count)
            throw ConfigError("--t0 outside the dataset time range");
        return set.trajectories[best].row(row).transpose();
    }
    Eigen::MatrixXd m = read_snapfile(spec);
    if (m.rows() == 1) return m.row(0).transpose();
    if (m.cols() == 1) return m.col(0);
    return m.row(0).transpose();  // trajectory file: take the first state
}

void warn_if_outside_hull(const RomModel& model, double mu) {
    if (model.train_params.empty()) return;
    if (mu < model.train_params.front() || mu > model.train_params.back())
        std::cerr << "warning: mu = " << mu << " lies outside the training hull ["
                  << model.train_params.front() << ", " << model.train_params.back()
                  << "]; extrapolating\n";
}

int run(int argc, char** argv) {
    CLI::App app{"sparse latent dynamics for bifurcating systems"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "simulate a synthetic dataset");
    std::string gen_config, gen_out;
    bool gen_force = false;
    gen->add_option("--config", gen_config, "run configuration file")->required();
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_flag("--force", gen_force, "overwrite a non-empty output directory");

    // train
    auto* tr = app.add_subcommand("train", "fit a reduced model from a dataset");
    std::string tr_config, tr_data, tr_out;
    bool tr_extern_basis = false;
    tr->add_option("--config", tr_config, "run configuration file")->required();
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--out", tr_out, "model output path (JSON)")->required();
    tr->add_flag("--externalize-basis", tr_extern_basis,
                 "store POD modes in a sibling SNAP file");

    // predict
    auto* pr = app.add_subcommand("predict", "integrate the latent model and decode");
    std::string pr_model, pr_x0 = "from-data", pr_data, pr_out;
    double pr_mu = 0.0, pr_t0 = 0.0, pr_tend = 0.0, pr_dt = 0.0;
    bool pr_t0_set = false, pr_dt_set = false;
    pr->add_option("--model", pr_model, "trained model file")->required();
    pr->add_option("--mu", pr_mu, "parameter value")->required();
    pr->add_option("--t-end", pr_tend, "prediction end time")->required();
    pr->add_option_function<double>(
          "--t0", [&](const double& v) { pr_t0 = v; pr_t0_set = true; },
          "prediction start time (default: model window start)");
    pr->add_option_function<double>(
          "--dt", [&](const double& v) { pr_dt = v; pr_dt_set = true; },
          "prediction step (default: model resample dt)");
    pr->add_option("--x0", pr_x0, "initial state SNAP file, or 'from-data'");
    pr->add_option("--data", pr_data, "dataset directory for --x0 from-data");
    pr->add_option("--out-prefix", pr_out, "output prefix")->required();

    // diagram
    auto* di = app.add_subcommand("diagram", "bifurcation diagram as CSV");
    std::string di_model, di_data, di_out, di_qoi, di_field = "u1", di_mode = "final";
    std::string di_weights = "uniform", di_config;
    Eigen::Index di_index = 0;
    double di_window = 0.25, di_t0 = 0.0, di_tend = 0.0, di_dt = 0.0;
    bool di_t0_set = false, di_tend_set = false, di_dt_set = false;
    di->add_option("--data", di_data, "dataset directory (params, QoI source)")->required();
    di->add_option("--model", di_model, "model file: diagram from online predictions");
    di->add_option("--config", di_config, "optional config supplying analysis.* defaults");
    di->add_option("--qoi", di_qoi, "point | l2norm | energy");
    di->add_option("--field", di_field, "field name for point/l2norm");
    di->add_option("--index", di_index, "in-field index for point");
    di->add_option("--mode", di_mode, "final | amplitude");
    di->add_option("--weights", di_weights, "uniform | ramp (energy QoI)");
    di->add_option("--window-fraction", di_window, "trailing window for amplitude mode");
    di->add_option_function<double>(
          "--t0", [&](const double& v) { di_t0 = v; di_t0_set = true; },
          "prediction start (model mode)");
    di->add_option_function<double>(
          "--t-end", [&](const double& v) { di_tend = v; di_tend_set = true; },
          "prediction end (model mode)");
    di->add_option_function<double>(
          "--dt", [&](const double& v) { di_dt = v; di_dt_set = true; },
          "prediction step (model mode)");
    di->add_option("--out", di_out, "output CSV path")->required();
    std::string di_json;
    di->add_option("--json-out", di_json, "also write the diagram as JSON arrays");

    // spectrum
    auto* sp = app.add_subcommand("spectrum", "power spectral density as CSV");
    std::string sp_data, sp_out, sp_signal = "energy", sp_field = "u1";
    Eigen::Index sp_index = 0, sp_param = 0;
    sp->add_option("--data", sp_data, "dataset directory")->required();
    sp->add_option("--signal", sp_signal, "energy | point");
    sp->add_option("--field", sp_field, "field for point signal");
    sp->add_option("--index", sp_index, "in-field index for point signal");
    sp->add_option("--param-index", sp_param, "trajectory index");
    sp->add_option("--out", sp_out, "output CSV path")->required();
    std::string sp_json;
    sp->add_option("--json-out", sp_json, "also write the spectrum as JSON arrays");

    // equations
    auto* eq = app.add_subcommand("equations", "print the identified latent ODEs");
    std::string eq_model;
    eq->add_option("--model", eq_model, "trained model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    const int threads = env_threads();

    if (gen->parsed()) {
        RunConfig cfg = RunConfig::parse_file(gen_config);
        cfg.require({"system.kind", "system.n_h", "grid.dt", "grid.count"});
        FomSystem sys = system_from_config(cfg);
        std::vector<double> params = params_from_config(cfg);
        TimeGrid grid(cfg.get_number("grid.t0", 0.0), cfg.get_number("grid.dt"),
                      cfg.get_int("grid.count"));
        Rng rng(cfg.get_u64("system.seed", 0));
        LiftMap map = make_lift_map(cfg.get_int("system.n_h"), sys.dim(),
                                    cfg.get_number("system.lift_gain", 0.0), rng);
        SnapshotSet set = generate_dataset(sys, params, grid, map, rng,
                                           cfg.get_number("grid.stop_tol", 0.0), threads);
        write_dataset(gen_out, set, gen_force);
        std::cout << "wrote " << set.params.size() << " trajectories to " << gen_out << "\n";
        return 0;
    }

    if (tr->parsed()) {
        RunConfig cfg = RunConfig::parse_file(tr_config);
        OfflineConfig off = offline_from_config(cfg);
        off.snapshot = "config=" + tr_config;
        SnapshotSet set = read_dataset(tr_data);
        std::vector<double> losses;
        RomModel checkpoint;
        RomModel model;
        try {
            model = offline_fit(set, off, &losses, &checkpoint);
        } catch (const NumericalFailure& e) {
            const std::string ckpt_path = tr_out + ".checkpoint";
            if (checkpoint.full_dim() > 0) save_model(checkpoint, ckpt_path);
            std::cerr << "numerical failure: " << e.what() << "\ncheckpoint written to "
                      << ckpt_path << "\n";
            return 4;
        }
        for (std::size_t i = 0; i < losses.size(); ++i)
            std::cout << i + 1 << "," << losses[i] << "\n";
        save_model(model, tr_out, tr_extern_basis);
        std::cout << "model written to " << tr_out << "\n";
        return 0;
    }

    if (pr->parsed()) {
        RomModel model = load_model(pr_model);
        if (!pr_t0_set) pr_t0 = model.window_t0;
        if (!pr_dt_set) pr_dt = model.resample_dt;
        warn_if_outside_hull(model, pr_mu);
        Eigen::VectorXd x0 = read_x0(pr_x0, pr_mu, pr_t0, pr_data);

        const auto steps = static_cast<Eigen::Index>(std::llround((pr_tend - pr_t0) / pr_dt));
        if (steps < 1) throw ConfigError("predict: horizon shorter than one step");
        TimeGrid grid(pr_t0, pr_dt, steps + 1);

        auto write_outputs = [&](const Eigen::MatrixXd& z, const Eigen::MatrixXd& full,
                                 const std::string& suffix) {
            write_snapfile(pr_out + suffix + ".snap", full);
            std::vector<std::string> header = {"t"};
            std::vector<Eigen::VectorXd> cols = {grid.times().head(z.rows())};
            for (Eigen::Index j = 0; j < z.cols(); ++j) {
                header.push_back("z" + std::to_string(j));
                cols.push_back(z.col(j));
            }
            write_csv(pr_out + "_latent" + suffix + ".csv", header, cols);
        };

        Eigen::MatrixXd z0 = encode_states(model, x0.transpose());
        try {
            Eigen::MatrixXd z = simulate(model.latent_model, z0.row(0).transpose(), pr_mu,
                                         grid);
            write_outputs(z, decode_latent(model, z), "");
        } catch (const DivergedTrajectory& e) {
            if (e.partial.rows() > 0)
                write_outputs(e.partial, decode_latent(model, e.partial), ".partial");
            std::cerr << "divergence: " << e.what() << "\n";
            return 5;
        }
        return 0;
    }

    if (di->parsed()) {
        SnapshotSet set = read_dataset(di_data);
        if (!di_config.empty()) {
            RunConfig cfg = RunConfig::parse_file(di_config);
            if (di_qoi.empty()) di_qoi = cfg.get_string("analysis.qoi", "point");
            di_field = cfg.get_string("analysis.field", di_field);
            di_index = cfg.get_int("analysis.index", di_index);
            di_mode = cfg.get_string("analysis.mode", di_mode);
            di_weights = cfg.get_string("analysis.weights", di_weights);
            di_window = cfg.get_number("analysis.window_fraction", di_window);
        }
        if (di_qoi.empty()) di_qoi = "point";
        QoiSpec spec = qoi_from_flags(di_qoi, di_field, di_index, di_weights,
                                      set.field_layout);
        Diagram diagram;
        if (di_model.empty()) {
            diagram = bifurcation_diagram(set, spec, mode_from_flag(di_mode), di_window);
        } else {
            RomModel model = load_model(di_model);
            const double t0 = di_t0_set ? di_t0 : model.window_t0;
            const double tend = di_tend_set ? di_tend : model.window_t1;
            const double dt = di_dt_set ? di_dt : model.resample_dt;
            Eigen::MatrixXd x0(set.params.size(), set.full_dim());
            const auto row = static_cast<Eigen::Index>(
                std::llround((t0 - set.grid.t0) / set.grid.dt));
            if (row < 0 || row >= set.grid.count)
                throw ConfigError("diagram: --t0 outside the dataset time range");
            for (std::size_t m = 0; m < set.trajectories.size(); ++m)
                x0.row(static_cast<Eigen::Index>(m)) = set.trajectories[m].row(row);
            diagram = bifurcation_diagram(model, set.params, x0, set.field_layout, spec,
                                          mode_from_flag(di_mode), t0, tend, dt, di_window,
                                          threads);
        }
        Eigen::VectorXd mu(diagram.params.size()), val(diagram.params.size()),
            div(diagram.params.size());
        for (std::size_t i = 0; i < diagram.params.size(); ++i) {
            mu[static_cast<Eigen::Index>(i)] = diagram.params[i];
            val[static_cast<Eigen::Index>(i)] = diagram.values[i];
            div[static_cast<Eigen::Index>(i)] = diagram.diverged[i];
        }
        write_csv(di_out, {"mu", "value", "diverged"}, {mu, val, div});
        if (!di_json.empty())
            write_json_columns(di_json, {"mu", "value", "diverged"}, {mu, val, div});
        return 0;
    }

    if (sp->parsed()) {
        SnapshotSet set = read_dataset(sp_data);
        if (sp_param < 0 || sp_param >= static_cast<Eigen::Index>(set.trajectories.size()))
            throw ConfigError("spectrum: --param-index out of range");
        QoiSpec spec;
        if (sp_signal == "energy") {
            spec.kind = QoiSpec::Kind::kinetic_energy;
        } else if (sp_signal == "point") {
            spec.kind = QoiSpec::Kind::point_value;
            spec.field = sp_field;
            spec.index = sp_index;
        } else {
            throw ConfigError("--signal must be energy or point");
        }
        const auto m = static_cast<std::size_t>(sp_param);
        Eigen::Index last = set.grid.count - 1;
        if (m < set.meta.stop_index.size() && set.meta.stop_tol > 0.0)
            last = std::min(last, set.meta.stop_index[m]);
        Eigen::VectorXd series = qoi(set.trajectories[m].topRows(last + 1),
                                     set.field_layout, spec);
        Spectrum spectrum = psd(series, set.grid.dt);
        write_csv(sp_out, {"frequency", "power"}, {spectrum.frequency, spectrum.power});
        if (!sp_json.empty())
            write_json_columns(sp_json, {"frequency", "power"},
                               {spectrum.frequency, spectrum.power});
        return 0;
    }

    if (eq->parsed()) {
        RomModel model = load_model(eq_model);
        std::cout << equations_to_text(model.latent_model) << "\n";
        return 0;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const VersionError& e) {
        std::cerr << "version error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << " (byte offset " << e.byte_offset
                  << ")\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const DivergedTrajectory& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 5;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
