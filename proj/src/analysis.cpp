#include "sparsebif/analysis.hpp"

#include <cmath>
#include <complex>

namespace sparsebif {

Eigen::VectorXd kinetic_energy(const Eigen::Ref<const Eigen::MatrixXd>& traj,
                               const FieldLayout& velocity_slices,
                               const Eigen::VectorXd& weights) {
    Eigen::Index total = 0;
    for (const auto& s : velocity_slices) {
        if (s.offset < 0 || s.offset + s.size > traj.cols())
            throw InvalidInput("kinetic_energy: slice outside state");
        total += s.size;
    }
    if (total == 0) throw InvalidInput("kinetic_energy: no velocity columns");
    if (weights.size() != 0 && weights.size() != total)
        throw InvalidInput("kinetic_energy: weights length mismatch");

    Eigen::VectorXd e = Eigen::VectorXd::Zero(traj.rows());
    Eigen::Index at = 0;
    for (const auto& s : velocity_slices) {
        const auto block = traj.middleCols(s.offset, s.size);
        if (weights.size() == 0) {
            e += 0.5 * block.array().square().matrix().rowwise().sum();
        } else {
            e += 0.5 * (block.array().square().rowwise() *
                        weights.segment(at, s.size).transpose().array())
                           .matrix()
                           .rowwise()
                           .sum();
        }
        at += s.size;
    }
    return e;
}

double amplitude(const Eigen::VectorXd& series) {
    if (series.size() == 0) throw InvalidInput("amplitude: empty series");
    return series.maxCoeff() - series.minCoeff();
}

Eigen::VectorXd qoi(const Eigen::Ref<const Eigen::MatrixXd>& traj, const FieldLayout& layout,
                    const QoiSpec& spec) {
    switch (spec.kind) {
        case QoiSpec::Kind::point_value: {
            const FieldSlice& f = find_field(layout, spec.field);
            if (spec.index < 0 || spec.index >= f.size)
                throw InvalidInput("qoi: point index outside field slice");
            return traj.col(f.offset + spec.index);
        }
        case QoiSpec::Kind::field_l2norm: {
            const FieldSlice& f = find_field(layout, spec.field);
            if (spec.weights.size() != 0 && spec.weights.size() != f.size)
                throw InvalidInput("qoi: weights length mismatch");
            const auto block = traj.middleCols(f.offset, f.size);
            if (spec.weights.size() == 0)
                return block.rowwise().norm();
            return (block.array().square().rowwise() * spec.weights.transpose().array())
                .rowwise()
                .sum()
                .sqrt();
        }
        case QoiSpec::Kind::kinetic_energy:
            return kinetic_energy(traj, layout, spec.weights);
    }
    throw InvalidInput("qoi: unknown kind");
}

namespace {

Eigen::Index trailing_window_start(Eigen::Index n, double window_fraction) {
    window_fraction = std::clamp(window_fraction, 0.0, 1.0);
    const auto keep = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::llround(window_fraction * static_cast<double>(n))));
    return n - keep;
}

double reduce_series(const Eigen::VectorXd& series, DiagramMode mode, double window_fraction) {
    if (mode == DiagramMode::final_value) return series[series.size() - 1];
    return amplitude(series.tail(series.size() - trailing_window_start(series.size(),
                                                                       window_fraction)));
}

}  // namespace

Diagram bifurcation_diagram(const SnapshotSet& set, const QoiSpec& spec, DiagramMode mode,
                            double window_fraction) {
    if (set.params.empty()) throw InvalidInput("bifurcation_diagram: empty parameter grid");
    Diagram d;
    d.params = set.params;
    d.diverged.assign(set.params.size(), 0);
    for (std::size_t m = 0; m < set.trajectories.size(); ++m) {
        // Padding duplicates the last computed snapshot; drop the duplicates
        // so final values and windows come from simulated rows only.
        Eigen::Index last = set.grid.count - 1;
        if (m < set.meta.stop_index.size() && set.meta.stop_tol > 0.0)
            last = std::min(last, set.meta.stop_index[m]);
        Eigen::VectorXd series = qoi(set.trajectories[m].topRows(last + 1), set.field_layout,
                                     spec);
        d.values.push_back(reduce_series(series, mode, window_fraction));
    }
    return d;
}

Diagram bifurcation_diagram(const RomModel& model, const std::vector<double>& params,
                            const Eigen::Ref<const Eigen::MatrixXd>& x0_rows,
                            const FieldLayout& layout, const QoiSpec& spec, DiagramMode mode,
                            double t0, double t_end, double dt, double window_fraction,
                            int threads) {
    if (params.empty()) throw InvalidInput("bifurcation_diagram: empty parameter grid");
    if (x0_rows.rows() != static_cast<Eigen::Index>(params.size()))
        throw InvalidInput("bifurcation_diagram: one initial state per parameter required");

    Diagram d;
    d.params = params;
    d.values.assign(params.size(), std::nan(""));
    d.diverged.assign(params.size(), 0);
    parallel_for(static_cast<Eigen::Index>(params.size()), threads, [&](Eigen::Index m) {
        const auto i = static_cast<std::size_t>(m);
        try {
            Eigen::MatrixXd traj = online_predict(model, x0_rows.row(m).transpose(),
                                                  params[i], t0, t_end, dt);
            Eigen::VectorXd series = qoi(traj, layout, spec);
            d.values[i] = reduce_series(series, mode, window_fraction);
        } catch (const DivergedTrajectory&) {
            d.diverged[i] = 1;
        }
    });
    return d;
}

namespace {

void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

std::vector<std::complex<double>> dft(const Eigen::VectorXd& x) {
    const auto n = static_cast<std::size_t>(x.size());
    if ((n & (n - 1)) == 0) {
        std::vector<std::complex<double>> a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = x[static_cast<Eigen::Index>(i)];
        fft_radix2(a);
        return a;
    }
    // Direct transform for awkward lengths; fine for diagnostic windows.
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double ang = -2.0 * M_PI * static_cast<double>(k) *
                               static_cast<double>(i) / static_cast<double>(n);
            acc += x[static_cast<Eigen::Index>(i)] *
                   std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace

Spectrum psd(const Eigen::VectorXd& signal, double dt) {
    if (signal.size() < 4) throw InvalidInput("psd: need at least 4 samples");
    if (!(dt > 0.0)) throw InvalidInput("psd: dt must be positive");
    const Eigen::Index n = signal.size();
    const auto spec = dft(signal);

    const Eigen::Index half = n / 2;
    Spectrum out;
    out.dt = dt;
    out.window_length = n;
    out.frequency.resize(half + 1);
    out.power.resize(half + 1);
    const double fs = 1.0 / (static_cast<double>(n) * dt);
    for (Eigen::Index k = 0; k <= half; ++k) {
        out.frequency[k] = static_cast<double>(k) * fs;
        double p = std::norm(spec[static_cast<std::size_t>(k)]) / static_cast<double>(n);
        // One-sided: interior bins also carry the conjugate half. The Nyquist
        // bin exists (and is unpaired) only for even lengths.
        const bool interior = k > 0 && !(n % 2 == 0 && k == half);
        if (interior) p *= 2.0;
        out.power[k] = p;
    }
    return out;
}

Eigen::MatrixXd delay_embed(const Eigen::VectorXd& signal, Eigen::Index lag, Eigen::Index m) {
    if (lag < 1 || m < 1) throw InvalidInput("delay_embed: lag and dimension must be >= 1");
    const Eigen::Index rows = signal.size() - (m - 1) * lag;
    if (rows < 1) throw InvalidInput("delay_embed: signal too short for embedding");
    Eigen::MatrixXd out(rows, m);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < m; ++j) out(i, j) = signal[i + j * lag];
    return out;
}

std::optional<Eigen::Index> steady_state_time(const Eigen::Ref<const Eigen::MatrixXd>& traj,
                                              double tol) {
    if (traj.rows() < 2) throw InvalidInput("steady_state_time: need at least 2 rows");
    for (Eigen::Index i = 0; i + 1 < traj.rows(); ++i) {
        const double norm = traj.row(i).norm();
        if (norm == 0.0) continue;
        if ((traj.row(i + 1) - traj.row(i)).norm() / norm < tol) return i;
    }
    return std::nullopt;
}

}  // namespace sparsebif
