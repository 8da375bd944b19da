#include <doctest.h>

#include <cmath>
#include <set>

#include "sparsebif/datagen.hpp"
#include "sparsebif/sindy.hpp"

using namespace sparsebif;

namespace {

LibrarySpec make_spec(int n, int ds, int dp, bool bias = true) {
    LibrarySpec s;
    s.state_dim = n;
    s.param_dim = dp > 0 ? 1 : 0;
    s.state_degree = ds;
    s.param_degree = dp;
    s.include_bias = bias;
    return s;
}

// Lorenz data with analytic derivatives sampled on an RK4 trajectory.
struct LorenzData {
    Eigen::MatrixXd z;
    Eigen::MatrixXd zdot;
};

LorenzData lorenz_data(double dt, double t_end) {
    FomSystem s;
    s.kind = SystemKind::Lorenz;
    const auto n = static_cast<Eigen::Index>(std::llround(t_end / dt)) + 1;
    TimeGrid grid(0.0, dt, n);
    Eigen::VectorXd y0(3);
    y0 << -8.0, 7.0, 27.0;
    LorenzData d;
    d.z = simulate_fom(s, 0.0, grid, y0).traj;
    d.zdot.resize(d.z.rows(), 3);
    for (Eigen::Index i = 0; i < d.z.rows(); ++i)
        d.zdot.row(i) = latent_rhs(s, 0.0, d.z.row(i).transpose(), 0.0).transpose();
    return d;
}

std::set<std::pair<int, int>> support_of(const Eigen::MatrixXd& xi) {
    std::set<std::pair<int, int>> sup;
    for (Eigen::Index i = 0; i < xi.rows(); ++i)
        for (Eigen::Index j = 0; j < xi.cols(); ++j)
            if (xi(i, j) != 0.0) sup.insert({static_cast<int>(i), static_cast<int>(j)});
    return sup;
}

}  // namespace

TEST_CASE("library_terms: counts and ordering") {
    // n=2, ds=2, dp=2: C(4,2) = 6 monomials x 3 powers of mu.
    CHECK(make_spec(2, 2, 2).term_count() == 18);
    CHECK(make_spec(2, 0, 0).term_count() == 1);  // bias only
    CHECK(make_spec(3, 2, 0).term_count() == 10);
    CHECK(make_spec(2, 2, 0, false).term_count() == 5);

    const auto terms = library_terms(make_spec(2, 2, 0));
    CHECK(term_name(terms[0]) == "");
    CHECK(term_name(terms[1]) == "z0");
    CHECK(term_name(terms[2]) == "z1");
    CHECK(term_name(terms[3]) == "z0^2");
    CHECK(term_name(terms[4]) == "z0 z1");
    CHECK(term_name(terms[5]) == "z1^2");
}

TEST_CASE("build_library: direct monomial evaluation") {
    Eigen::MatrixXd z(1, 2);
    z << 2, 3;
    Eigen::MatrixXd theta = build_library(z, Eigen::VectorXd::Ones(1), make_spec(2, 2, 0));
    Eigen::VectorXd expected(6);
    expected << 1, 2, 3, 4, 6, 9;
    CHECK((theta.row(0).transpose() - expected).cwiseAbs().maxCoeff() == 0.0);

    // Parameter powers multiply each monomial, ascending k fastest.
    Eigen::MatrixXd theta_p = build_library(z, Eigen::VectorXd::Constant(1, 2.0),
                                            make_spec(2, 1, 2));
    Eigen::VectorXd exp_p(9);
    exp_p << 1, 2, 4, 2, 4, 8, 3, 6, 12;  // {1, z0, z1} x {1, mu, mu^2}
    CHECK((theta_p.row(0).transpose() - exp_p).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd bad(1, 2);
    bad << std::nan(""), 0;
    CHECK_THROWS_AS(build_library(bad, Eigen::VectorXd::Ones(1), make_spec(2, 2, 0)),
                    InvalidInput);
}

TEST_CASE("library_grad_vjp: matches finite differences") {
    Rng rng(3);
    LibrarySpec spec = make_spec(3, 3, 2);
    Eigen::MatrixXd z = rng.normal_matrix(5, 3);
    Eigen::VectorXd mu(5);
    for (int i = 0; i < 5; ++i) mu[i] = rng.uniform(0.5, 1.5);
    Eigen::MatrixXd g_theta = rng.normal_matrix(5, spec.term_count());

    Eigen::MatrixXd g_z = library_grad_vjp(z, mu, spec, g_theta);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            Eigen::MatrixXd zp = z, zm = z;
            zp(i, j) += h;
            zm(i, j) -= h;
            const double fp = (build_library(zp, mu, spec).row(i) *
                               g_theta.row(i).transpose())(0, 0);
            const double fm = (build_library(zm, mu, spec).row(i) *
                               g_theta.row(i).transpose())(0, 0);
            CHECK(g_z(i, j) == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
        }
    }
}

TEST_CASE("stlsq: linear decay recovered from dense samples") {
    // z' = -2 z, closed form z = e^{-2t}, analytic derivatives.
    const double dt = 1e-3;
    const Eigen::Index n = 2001;
    Eigen::MatrixXd z(n, 1), zdot(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = dt * static_cast<double>(i);
        z(i, 0) = std::exp(-2.0 * t);
        zdot(i, 0) = -2.0 * z(i, 0);
    }
    LibrarySpec spec = make_spec(1, 1, 0);
    Eigen::MatrixXd theta = build_library(z, Eigen::VectorXd::Zero(n), spec);
    SparseFit fit = stlsq(theta, zdot, 0.1);
    CHECK(fit.xi(0, 0) == 0.0);                                  // bias removed
    CHECK(fit.xi(1, 0) == doctest::Approx(-2.0).epsilon(1e-3));  // z coefficient

    // Over-thresholding returns an all-zero column with the warning flag.
    SparseFit over = stlsq(theta, zdot, 10.0);
    CHECK(over.xi.cwiseAbs().maxCoeff() == 0.0);
    CHECK(over.column_zeroed[0] == 1);
}

TEST_CASE("stlsq: Lorenz support and coefficients") {
    LorenzData d = lorenz_data(1e-3, 10.0);
    LibrarySpec spec = make_spec(3, 2, 0);
    Eigen::MatrixXd theta = build_library(d.z, Eigen::VectorXd::Zero(d.z.rows()), spec);
    SparseFit fit = stlsq(theta, d.zdot, 0.1);

    // Terms in graded-lex order: 1, z0, z1, z2, z0^2, z0 z1, z0 z2, z1^2, z1 z2, z2^2
    CHECK(support_of(fit.xi).size() == 7);
    CHECK(fit.xi(1, 0) == doctest::Approx(-10.0).epsilon(1e-3));      // z0 in eq 0
    CHECK(fit.xi(2, 0) == doctest::Approx(10.0).epsilon(1e-3));       // z1 in eq 0
    CHECK(fit.xi(1, 1) == doctest::Approx(28.0).epsilon(1e-3));       // z0 in eq 1
    CHECK(fit.xi(2, 1) == doctest::Approx(-1.0).epsilon(1e-3));       // z1 in eq 1
    CHECK(fit.xi(6, 1) == doctest::Approx(-1.0).epsilon(1e-3));       // z0 z2 in eq 1
    CHECK(fit.xi(5, 2) == doctest::Approx(1.0).epsilon(1e-3));        // z0 z1 in eq 2
    CHECK(fit.xi(3, 2) == doctest::Approx(-8.0 / 3.0).epsilon(1e-3)); // z2 in eq 2

    // Thresholding invariant.
    for (Eigen::Index i = 0; i < fit.xi.rows(); ++i)
        for (Eigen::Index j = 0; j < fit.xi.cols(); ++j)
            if (fit.xi(i, j) != 0.0) CHECK(std::abs(fit.xi(i, j)) >= 0.1);
}

TEST_CASE("ensemble_stlsq: degenerate config equals plain stlsq") {
    LorenzData d = lorenz_data(1e-3, 4.0);
    LibrarySpec spec = make_spec(3, 2, 0);
    Eigen::MatrixXd theta = build_library(d.z, Eigen::VectorXd::Zero(d.z.rows()), spec);
    EnsembleConfig cfg;  // one model, full sample, no drops
    SparseFit plain = stlsq(theta, d.zdot, 0.1);
    SparseFit ens = ensemble_stlsq(theta, d.zdot, 0.1, 1e-10, cfg);
    CHECK((plain.xi - ens.xi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ensemble_stlsq: noiseless bagging stays close to plain stlsq") {
    const double dt = 1e-3;
    const Eigen::Index n = 2001;
    Eigen::MatrixXd z(n, 1), zdot(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = dt * static_cast<double>(i);
        z(i, 0) = std::exp(-2.0 * t);
        zdot(i, 0) = -2.0 * z(i, 0);
    }
    LibrarySpec spec = make_spec(1, 2, 0);
    Eigen::MatrixXd theta = build_library(z, Eigen::VectorXd::Zero(n), spec);
    EnsembleConfig cfg;
    cfg.n_models = 20;
    cfg.sample_fraction = 0.8;
    cfg.seed = 42;
    SparseFit ens = ensemble_stlsq(theta, zdot, 0.1, 1e-10, cfg);
    CHECK(ens.xi(1, 0) == doctest::Approx(-2.0).epsilon(1e-3));
    CHECK(support_of(ens.xi).size() == 1);
}

TEST_CASE("ensemble_stlsq: exact support under derivative noise") {
    LorenzData d = lorenz_data(1e-3, 10.0);
    Rng noise(99);
    Eigen::MatrixXd noisy = d.zdot;
    for (Eigen::Index j = 0; j < 3; ++j) {
        const double scale = 0.01 * std::sqrt(d.zdot.col(j).squaredNorm() /
                                              static_cast<double>(d.zdot.rows()));
        for (Eigen::Index i = 0; i < noisy.rows(); ++i) noisy(i, j) += scale * noise.normal();
    }
    LibrarySpec spec = make_spec(3, 2, 0);
    Eigen::MatrixXd theta = build_library(d.z, Eigen::VectorXd::Zero(d.z.rows()), spec);
    EnsembleConfig cfg;
    cfg.n_models = 50;
    cfg.sample_fraction = 0.8;
    cfg.library_drop_count = 1;
    cfg.seed = 7;
    SparseFit clean = stlsq(build_library(d.z, Eigen::VectorXd::Zero(d.z.rows()), spec),
                            d.zdot, 0.1);
    SparseFit ens = ensemble_stlsq(theta, noisy, 0.1, 1e-10, cfg);
    CHECK(support_of(ens.xi) == support_of(clean.xi));
}

TEST_CASE("simulate: zero coefficients and exponential decay") {
    SindyModel model;
    model.spec = make_spec(1, 1, 0);
    model.xi = Eigen::MatrixXd::Zero(2, 1);
    TimeGrid grid(0.0, 0.01, 101);
    Eigen::MatrixXd traj = simulate(model, Eigen::VectorXd::Ones(1), 0.0, grid);
    CHECK((traj.array() - 1.0).cwiseAbs().maxCoeff() == 0.0);

    model.xi(1, 0) = -1.0;
    Eigen::MatrixXd decay = simulate(model, Eigen::VectorXd::Ones(1), 0.0, grid);
    CHECK(std::abs(decay(100, 0) - std::exp(-1.0)) < 1e-8);
}

TEST_CASE("simulate: the printed planar system orbits at its eigenfrequency") {
    // z0' = -0.111 z0 - 0.992 z1, z1' = 0.992 z0 + 0.111 z1:
    // eigenvalues +- i sqrt(0.992^2 - 0.111^2), so orbits neither grow nor decay.
    SindyModel model;
    model.spec = make_spec(2, 1, 0);
    model.xi = Eigen::MatrixXd::Zero(3, 2);
    model.xi(1, 0) = -0.111;
    model.xi(2, 0) = -0.992;
    model.xi(1, 1) = 0.992;
    model.xi(2, 1) = 0.111;
    const double freq = std::sqrt(0.992 * 0.992 - 0.111 * 0.111);
    const double period = 2.0 * M_PI / freq;
    TimeGrid grid(0.0, period / 2000.0, 2001);
    Eigen::VectorXd z0(2);
    z0 << 1.0, 0.25;
    Eigen::MatrixXd traj = simulate(model, z0, 0.0, grid);
    // After one full period the orbit closes.
    CHECK((traj.row(2000) - traj.row(0)).norm() < 1e-6);
    // Quadratic invariant of the rotation stays constant (zero radial growth).
    auto invariant = [&](Eigen::Index i) {
        const double a = traj(i, 0), b = traj(i, 1);
        return 0.992 * (a * a + b * b) + 2.0 * 0.111 * a * b;
    };
    CHECK(invariant(1500) == doctest::Approx(invariant(0)).epsilon(1e-9));
}

TEST_CASE("equations_to_text: formatting contract") {
    SindyModel zero;
    zero.spec = make_spec(1, 1, 0);
    zero.xi = Eigen::MatrixXd::Zero(2, 1);
    CHECK(equations_to_text(zero) == "z0' = 0");

    SindyModel planar;
    planar.spec = make_spec(2, 1, 0);
    planar.xi = Eigen::MatrixXd::Zero(3, 2);
    planar.xi(1, 0) = -0.111;
    planar.xi(2, 0) = -0.992;
    planar.xi(1, 1) = 0.992;
    planar.xi(2, 1) = 0.111;
    CHECK(equations_to_text(planar) ==
          "z0' = -0.111 z0 - 0.992 z1\nz1' = 0.992 z0 + 0.111 z1");

    SindyModel decay;
    decay.spec = make_spec(1, 1, 0);
    decay.xi = Eigen::MatrixXd::Zero(2, 1);
    decay.xi(1, 0) = -2.0;
    CHECK(equations_to_text(decay) == "z0' = -2.000 z0");
}

TEST_CASE("stlsq: support never grows and the loop terminates") {
    Rng rng(21);
    Eigen::MatrixXd theta = rng.normal_matrix(200, 12);
    Eigen::MatrixXd zdot = theta.col(3) * 2.0 + theta.col(7) * -1.5;
    SparseFit fit = stlsq(theta, zdot, 0.5, 1e-10, 100);
    auto sup = support_of(fit.xi);
    CHECK(sup.count({3, 0}) == 1);
    CHECK(sup.count({7, 0}) == 1);
    CHECK(sup.size() == 2);
}

TEST_CASE("stlsq round trip: refit on simulated data reproduces the trajectory") {
    // Planar rotation with weak damping; fit a degree-1 model on its own
    // densely sampled output and integrate the fit from the same start.
    SindyModel truth;
    truth.spec = make_spec(2, 1, 0);
    truth.xi = Eigen::MatrixXd::Zero(3, 2);
    truth.xi(1, 0) = -0.1;
    truth.xi(2, 0) = -1.0;
    truth.xi(1, 1) = 1.0;
    truth.xi(2, 1) = -0.1;
    TimeGrid grid(0.0, 1e-3, 12001);
    Eigen::VectorXd z0(2);
    z0 << 1.0, -0.5;
    Eigen::MatrixXd traj = simulate(truth, z0, 0.0, grid);

    Eigen::MatrixXd zdot = central_diff(traj, grid.dt);
    Eigen::MatrixXd theta = build_library(traj, Eigen::VectorXd::Zero(traj.rows()),
                                          truth.spec);
    SparseFit fit = stlsq(theta, zdot, 0.01);
    SindyModel refit;
    refit.spec = truth.spec;
    refit.xi = fit.xi;
    Eigen::MatrixXd replay = simulate(refit, z0, 0.0, grid);
    CHECK((replay - traj).norm() / traj.norm() < 1e-4);
}
