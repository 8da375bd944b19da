#include "sparsebif/sindy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace sparsebif {

void LibrarySpec::validate() const {
    if (state_dim < 1) throw InvalidInput("LibrarySpec: state_dim must be >= 1");
    if (param_dim != 0 && param_dim != 1)
        throw InvalidInput("LibrarySpec: param_dim must be 0 or 1");
    if (state_degree < 0 || param_degree < 0)
        throw InvalidInput("LibrarySpec: degrees must be >= 0");
    if (param_dim == 0 && param_degree > 0)
        throw InvalidInput("LibrarySpec: param_degree > 0 needs param_dim = 1");
}

namespace {

void enumerate_monomials(int n_vars, int var, int remaining, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
    if (var == n_vars - 1) {
        current[static_cast<std::size_t>(var)] = remaining;
        out.push_back(current);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        current[static_cast<std::size_t>(var)] = e;
        enumerate_monomials(n_vars, var + 1, remaining - e, current, out);
    }
}

}  // namespace

std::vector<LibraryTerm> library_terms(const LibrarySpec& spec) {
    spec.validate();
    std::vector<std::vector<int>> monos;
    std::vector<int> current(static_cast<std::size_t>(spec.state_dim), 0);
    for (int g = 0; g <= spec.state_degree; ++g)
        enumerate_monomials(spec.state_dim, 0, g, current, monos);

    std::vector<LibraryTerm> terms;
    const int kmax = spec.param_dim == 1 ? spec.param_degree : 0;
    for (const auto& m : monos) {
        const bool is_const = std::all_of(m.begin(), m.end(), [](int e) { return e == 0; });
        if (is_const && !spec.include_bias) continue;
        for (int k = 0; k <= kmax; ++k) terms.push_back({m, k});
    }
    return terms;
}

Eigen::Index LibrarySpec::term_count() const {
    return static_cast<Eigen::Index>(library_terms(*this).size());
}

std::string term_name(const LibraryTerm& term) {
    std::ostringstream os;
    bool first = true;
    auto emit = [&](const std::string& base, int pow) {
        if (pow == 0) return;
        if (!first) os << " ";
        os << base;
        if (pow > 1) os << "^" << pow;
        first = false;
    };
    emit("mu", term.mu_pow);
    for (std::size_t i = 0; i < term.z_pow.size(); ++i)
        emit("z" + std::to_string(i), term.z_pow[i]);
    return os.str();
}

Eigen::MatrixXd build_library(const Eigen::Ref<const Eigen::MatrixXd>& z_rows,
                              const Eigen::VectorXd& mu_per_row, const LibrarySpec& spec) {
    const auto terms = library_terms(spec);
    if (z_rows.cols() != spec.state_dim)
        throw InvalidInput("build_library: state dimension mismatch");
    if (mu_per_row.size() != z_rows.rows())
        throw InvalidInput("build_library: mu_per_row length mismatch");
    require_finite(z_rows, "build_library");

    const Eigen::Index rows = z_rows.rows();
    Eigen::MatrixXd theta(rows, static_cast<Eigen::Index>(terms.size()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
        Eigen::ArrayXd col = Eigen::ArrayXd::Ones(rows);
        for (std::size_t i = 0; i < terms[j].z_pow.size(); ++i)
            for (int p = 0; p < terms[j].z_pow[i]; ++p)
                col *= z_rows.col(static_cast<Eigen::Index>(i)).array();
        for (int p = 0; p < terms[j].mu_pow; ++p) col *= mu_per_row.array();
        theta.col(static_cast<Eigen::Index>(j)) = col;
    }
    return theta;
}

Eigen::MatrixXd library_grad_vjp(const Eigen::Ref<const Eigen::MatrixXd>& z_rows,
                                 const Eigen::VectorXd& mu_per_row, const LibrarySpec& spec,
                                 const Eigen::Ref<const Eigen::MatrixXd>& g_theta) {
    const auto terms = library_terms(spec);
    if (g_theta.rows() != z_rows.rows() ||
        g_theta.cols() != static_cast<Eigen::Index>(terms.size()))
        throw InvalidInput("library_grad_vjp: gradient shape mismatch");

    Eigen::MatrixXd g_z = Eigen::MatrixXd::Zero(z_rows.rows(), z_rows.cols());
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const auto& t = terms[j];
        for (std::size_t i = 0; i < t.z_pow.size(); ++i) {
            if (t.z_pow[i] == 0) continue;
            // d/dz_i (mu^k prod z^e) = e_i * mu^k * z_i^{e_i-1} * prod_{l != i} z_l^{e_l}
            Eigen::ArrayXd d = Eigen::ArrayXd::Constant(z_rows.rows(),
                                                        static_cast<double>(t.z_pow[i]));
            for (int p = 0; p < t.z_pow[i] - 1; ++p)
                d *= z_rows.col(static_cast<Eigen::Index>(i)).array();
            for (std::size_t l = 0; l < t.z_pow.size(); ++l) {
                if (l == i) continue;
                for (int p = 0; p < t.z_pow[l]; ++p)
                    d *= z_rows.col(static_cast<Eigen::Index>(l)).array();
            }
            for (int p = 0; p < t.mu_pow; ++p) d *= mu_per_row.array();
            g_z.col(static_cast<Eigen::Index>(i)) +=
                (d * g_theta.col(static_cast<Eigen::Index>(j)).array()).matrix();
        }
    }
    return g_z;
}

SparseFit stlsq(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                const Eigen::Ref<const Eigen::MatrixXd>& zdot, double tau, double ridge,
                int max_iter) {
    if (theta.rows() != zdot.rows()) throw InvalidInput("stlsq: row count mismatch");
    if (!(tau >= 0.0)) throw InvalidInput("stlsq: tau must be >= 0");
    const Eigen::Index r = theta.cols();
    const Eigen::Index n = zdot.cols();

    SparseFit fit;
    fit.xi = Eigen::MatrixXd::Zero(r, n);
    fit.column_zeroed.assign(static_cast<std::size_t>(n), 0);

    for (Eigen::Index k = 0; k < n; ++k) {
        std::vector<Eigen::Index> active(static_cast<std::size_t>(r));
        std::iota(active.begin(), active.end(), 0);
        Eigen::VectorXd coef;
        for (int iter = 0; iter < max_iter && !active.empty(); ++iter) {
            Eigen::MatrixXd sub(theta.rows(), static_cast<Eigen::Index>(active.size()));
            for (std::size_t j = 0; j < active.size(); ++j)
                sub.col(static_cast<Eigen::Index>(j)) = theta.col(active[j]);
            coef = least_squares(sub, zdot.col(k), ridge);

            std::vector<Eigen::Index> surviving;
            for (std::size_t j = 0; j < active.size(); ++j)
                if (std::abs(coef[static_cast<Eigen::Index>(j)]) >= tau)
                    surviving.push_back(active[j]);

            if (surviving.size() == active.size()) break;  // support stable
            // The support only ever shrinks, so this terminates within r passes.
            if (surviving.empty()) {
                active.clear();
                break;
            }
            active = std::move(surviving);
            coef.resize(0);
        }
        if (active.empty()) {
            fit.column_zeroed[static_cast<std::size_t>(k)] = 1;
            continue;
        }
        if (coef.size() == 0) {
            // max_iter interrupted the loop right after a shrink: one more solve.
            Eigen::MatrixXd sub(theta.rows(), static_cast<Eigen::Index>(active.size()));
            for (std::size_t j = 0; j < active.size(); ++j)
                sub.col(static_cast<Eigen::Index>(j)) = theta.col(active[j]);
            coef = least_squares(sub, zdot.col(k), ridge);
        }
        for (std::size_t j = 0; j < active.size(); ++j) {
            const double v = coef[static_cast<Eigen::Index>(j)];
            if (std::abs(v) >= tau) fit.xi(active[j], k) = v;
        }
        if (fit.xi.col(k).isZero(0.0)) fit.column_zeroed[static_cast<std::size_t>(k)] = 1;
    }
    return fit;
}

SparseFit ensemble_stlsq(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                         const Eigen::Ref<const Eigen::MatrixXd>& zdot, double tau,
                         double ridge, const EnsembleConfig& cfg) {
    if (cfg.n_models < 1) throw InvalidInput("ensemble_stlsq: n_models must be >= 1");
    if (!(cfg.sample_fraction > 0.0 && cfg.sample_fraction <= 1.0))
        throw InvalidInput("ensemble_stlsq: sample_fraction must be in (0, 1]");
    const Eigen::Index r = theta.cols();
    const Eigen::Index n = zdot.cols();
    if (cfg.library_drop_count < 0 || cfg.library_drop_count >= r)
        throw InvalidInput("ensemble_stlsq: library_drop_count out of range");

    const Eigen::Index rows = theta.rows();
    const Eigen::Index draw = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::lround(cfg.sample_fraction * static_cast<double>(rows))));

    Rng rng(cfg.seed);
    std::vector<Eigen::MatrixXd> members;
    members.reserve(static_cast<std::size_t>(cfg.n_models));

    for (int m = 0; m < cfg.n_models; ++m) {
        Rng local = rng.fork(static_cast<std::uint64_t>(m));

        std::vector<Eigen::Index> keep(static_cast<std::size_t>(r));
        std::iota(keep.begin(), keep.end(), 0);
        for (int d = 0; d < cfg.library_drop_count; ++d) {
            const auto pick = static_cast<std::size_t>(
                local.uniform() * static_cast<double>(keep.size()));
            keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(
                                          std::min(pick, keep.size() - 1)));
        }

        Eigen::MatrixXd sub_theta(draw, static_cast<Eigen::Index>(keep.size()));
        Eigen::MatrixXd sub_zdot(draw, n);
        for (Eigen::Index i = 0; i < draw; ++i) {
            const auto row = static_cast<Eigen::Index>(
                local.uniform() * static_cast<double>(rows));
            const Eigen::Index rr = std::min(row, rows - 1);
            for (std::size_t j = 0; j < keep.size(); ++j)
                sub_theta(i, static_cast<Eigen::Index>(j)) = theta(rr, keep[j]);
            sub_zdot.row(i) = zdot.row(rr);
        }

        SparseFit member = stlsq(sub_theta, sub_zdot, tau, ridge);
        Eigen::MatrixXd full = Eigen::MatrixXd::Zero(r, n);
        for (std::size_t j = 0; j < keep.size(); ++j)
            full.row(keep[j]) = member.xi.row(static_cast<Eigen::Index>(j));
        members.push_back(std::move(full));
    }

    SparseFit fit;
    fit.xi = Eigen::MatrixXd::Zero(r, n);
    fit.column_zeroed.assign(static_cast<std::size_t>(n), 0);
    std::vector<double> vals(members.size());
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            for (std::size_t m = 0; m < members.size(); ++m) vals[m] = members[m](i, k);
            double agg;
            if (cfg.aggregation == EnsembleConfig::Aggregation::mean) {
                agg = std::accumulate(vals.begin(), vals.end(), 0.0) /
                      static_cast<double>(vals.size());
            } else {
                std::sort(vals.begin(), vals.end());
                const std::size_t mid = vals.size() / 2;
                agg = vals.size() % 2 == 1 ? vals[mid] : 0.5 * (vals[mid - 1] + vals[mid]);
            }
            fit.xi(i, k) = std::abs(agg) >= tau ? agg : 0.0;
        }
    }
    for (Eigen::Index k = 0; k < n; ++k)
        if (fit.xi.col(k).isZero(0.0)) fit.column_zeroed[static_cast<std::size_t>(k)] = 1;
    return fit;
}

Eigen::MatrixXd simulate(const SindyModel& model, const Eigen::VectorXd& z0, double mu,
                         const TimeGrid& grid) {
    if (z0.size() != model.spec.state_dim) throw InvalidInput("simulate: z0 dimension mismatch");
    if (model.xi.rows() != model.spec.term_count() ||
        model.xi.cols() != model.spec.state_dim)
        throw InvalidInput("simulate: coefficient shape mismatch");

    // The online phase lives in this loop, so the library row is evaluated in
    // place with no per-stage allocations. Term products follow the same
    // multiplication order as build_library.
    const auto terms = library_terms(model.spec);
    const Eigen::Index r = static_cast<Eigen::Index>(terms.size());
    const Eigen::Index n = model.spec.state_dim;
    Eigen::VectorXd theta(r);
    Eigen::MatrixXd xi_t = model.xi.transpose();

    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), stage(n);
    auto eval = [&](const Eigen::VectorXd& z, Eigen::VectorXd& dz) -> bool {
        if (!z.allFinite()) return false;
        for (Eigen::Index j = 0; j < r; ++j) {
            const auto& t = terms[static_cast<std::size_t>(j)];
            double v = 1.0;
            for (std::size_t i = 0; i < t.z_pow.size(); ++i)
                for (int p = 0; p < t.z_pow[i]; ++p) v *= z[static_cast<Eigen::Index>(i)];
            for (int p = 0; p < t.mu_pow; ++p) v *= mu;
            theta[j] = v;
        }
        dz.noalias() = xi_t * theta;
        return true;
    };

    Eigen::MatrixXd out(grid.count, n);
    out.row(0) = z0.transpose();
    Eigen::VectorXd z = z0;
    const double h = grid.dt;
    for (Eigen::Index i = 0; i + 1 < grid.count; ++i) {
        bool ok = eval(z, k1);
        if (ok) {
            stage = z + 0.5 * h * k1;
            ok = eval(stage, k2);
        }
        if (ok) {
            stage = z + 0.5 * h * k2;
            ok = eval(stage, k3);
        }
        if (ok) {
            stage = z + h * k3;
            ok = eval(stage, k4);
        }
        if (ok) {
            z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            ok = z.allFinite();
        }
        if (!ok)
            throw DivergedTrajectory("simulate: non-finite state at step " +
                                         std::to_string(i + 1),
                                     i, out.topRows(i + 1));
        out.row(i + 1) = z.transpose();
    }
    return out;
}

std::string equations_to_text(const SindyModel& model) {
    const auto terms = library_terms(model.spec);
    std::ostringstream os;
    for (Eigen::Index k = 0; k < model.spec.state_dim; ++k) {
        os << "z" << k << "' = ";
        bool any = false;
        for (std::size_t j = 0; j < terms.size(); ++j) {
            const double c = model.xi(static_cast<Eigen::Index>(j), k);
            if (c == 0.0) continue;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3f", std::abs(c));
            if (!any) {
                if (c < 0.0) os << "-";
            } else {
                os << (c < 0.0 ? " - " : " + ");
            }
            os << buf;
            const std::string name = term_name(terms[j]);
            if (!name.empty()) os << " " << name;
            any = true;
        }
        if (!any) os << "0";
        if (k + 1 < model.spec.state_dim) os << "\n";
    }
    return os.str();
}

}  // namespace sparsebif
