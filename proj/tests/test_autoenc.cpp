#include <doctest.h>

#include <cmath>

#include "sparsebif/autoenc.hpp"

using namespace sparsebif;

namespace {

LibrarySpec gradcheck_spec(int latent) {
    LibrarySpec spec;
    spec.state_dim = latent;
    spec.param_dim = 1;
    spec.state_degree = 2;
    spec.param_degree = 1;
    return spec;
}

struct GradCheckSetup {
    MlpParams enc, dec;
    Eigen::MatrixXd xi;
    Eigen::MatrixXd x, xdot;
    Eigen::VectorXd mu;
    LibrarySpec spec;
    LossWeights weights;
};

GradCheckSetup make_setup(std::uint64_t seed, LossWeights weights) {
    Rng rng(seed);
    GradCheckSetup s;
    s.enc = init_mlp({6, 4, 2}, rng);
    s.dec = init_mlp({2, 4, 6}, rng);
    s.spec = gradcheck_spec(2);
    s.weights = weights;
    const Eigen::Index r = s.spec.term_count();
    s.xi.resize(r, 2);
    // Keep xi away from zero so the l1 term is differentiable at the test point.
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) {
            const double mag = rng.uniform(0.2, 1.0);
            s.xi(i, j) = rng.uniform() < 0.5 ? -mag : mag;
        }
    s.x = rng.normal_matrix(5, 6);
    s.xdot = rng.normal_matrix(5, 6);
    s.mu.resize(5);
    for (int i = 0; i < 5; ++i) s.mu[i] = rng.uniform(0.5, 1.5);
    return s;
}

double loss_of(const GradCheckSetup& s) {
    return joint_loss_and_grads(s.x, s.xdot, s.mu, s.enc, s.dec, s.xi, s.spec, s.weights).loss;
}

// Central finite difference of the joint loss w.r.t. one scalar parameter.
double fd_grad(GradCheckSetup& s, double* slot, double h = 1e-5) {
    const double saved = *slot;
    *slot = saved + h;
    const double fp = loss_of(s);
    *slot = saved - h;
    const double fm = loss_of(s);
    *slot = saved;
    return (fp - fm) / (2.0 * h);
}

double block_rel_error(GradCheckSetup& s, double* data, Eigen::Index size,
                       const double* analytic) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < size; ++i) {
        const double fd = fd_grad(s, data + i);
        num += (analytic[i] - fd) * (analytic[i] - fd);
        den += fd * fd;
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace

TEST_CASE("init_mlp: Xavier bound, zero biases, determinism") {
    Rng rng(1);
    MlpParams p = init_mlp({4, 2}, rng);
    // bound = sqrt(6 / (4 + 2)) = 1 exactly
    CHECK(p.w[0].cwiseAbs().maxCoeff() <= 1.0);
    CHECK(p.b[0].cwiseAbs().maxCoeff() == 0.0);
    Rng a(9), b(9);
    MlpParams pa = init_mlp({5, 3, 2}, a), pb = init_mlp({5, 3, 2}, b);
    for (std::size_t l = 0; l < pa.w.size(); ++l) CHECK(pa.w[l] == pb.w[l]);
    Rng c(2);
    CHECK_THROWS_AS(init_mlp({4}, c), InvalidInput);
}

TEST_CASE("forward: degenerate nets and a pencil-and-paper ELU pass") {
    MlpParams zero;
    zero.w = {Eigen::MatrixXd::Zero(3, 2)};
    zero.b = {Eigen::VectorXd::Zero(3)};
    Eigen::MatrixXd x(2, 2);
    x << 1, -1, 0.5, 2;
    CHECK(apply(zero, x).cwiseAbs().maxCoeff() == 0.0);

    MlpParams ident;
    ident.w = {Eigen::MatrixXd::Identity(2, 2)};
    ident.b = {Eigen::VectorXd::Zero(2)};
    CHECK((apply(ident, x) - x).cwiseAbs().maxCoeff() == 0.0);  // output layer is linear

    // Hand-computed 2-2-1 net on input (1, -1):
    //   layer 0 (ELU): w = [[1, 2], [-1, 0.5]], b = (0.5, -0.25)
    //     pre = (1 - 2 + 0.5, -1 - 0.5 - 0.25) = (-0.5, -1.75)
    //     act = (e^{-0.5} - 1, e^{-1.75} - 1)
    //   layer 1 (identity): w = [[2, -3]], b = (0.125)
    MlpParams net;
    net.w = {Eigen::MatrixXd(2, 2), Eigen::MatrixXd(1, 2)};
    net.w[0] << 1, 2, -1, 0.5;
    net.w[1] << 2, -3;
    net.b = {Eigen::VectorXd(2), Eigen::VectorXd(1)};
    net.b[0] << 0.5, -0.25;
    net.b[1] << 0.125;
    Eigen::MatrixXd in(1, 2);
    in << 1, -1;
    const double h1 = std::expm1(-0.5), h2 = std::expm1(-1.75);
    const double expected = 2 * h1 - 3 * h2 + 0.125;
    CHECK(apply(net, in)(0, 0) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("ELU: value and slope continuous at 0") {
    MlpParams net;
    net.w = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
    net.b = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
    Eigen::MatrixXd at0(1, 1), eps_p(1, 1), eps_m(1, 1);
    at0 << 0.0;
    eps_p << 1e-12;
    eps_m << -1e-12;
    CHECK(apply(net, at0)(0, 0) == 0.0);
    CHECK(std::abs(apply(net, eps_p)(0, 0) - apply(net, eps_m)(0, 0)) < 3e-12);
    // Slope from both sides via the jvp is 1 in the limit, and exactly 1 at 0.
    Eigen::MatrixXd v(1, 1);
    v << 1.0;
    CHECK(jvp(net, at0, v)(0, 0) == 1.0);
    CHECK(jvp(net, eps_p, v)(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(jvp(net, eps_m, v)(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("jvp: linearity, zero tangent, finite-difference oracle") {
    Rng rng(3);
    MlpParams lin;
    lin.w = {rng.normal_matrix(3, 4)};
    lin.b = {Eigen::VectorXd::Zero(3)};
    Eigen::MatrixXd x = rng.normal_matrix(2, 4), v = rng.normal_matrix(2, 4);
    CHECK((jvp(lin, x, v) - v * lin.w[0].transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(jvp(lin, x, Eigen::MatrixXd::Zero(2, 4)).cwiseAbs().maxCoeff() == 0.0);

    MlpParams net = init_mlp({5, 7, 3}, rng);
    Eigen::MatrixXd x2 = rng.normal_matrix(4, 5), v2 = rng.normal_matrix(4, 5);
    const double h = 1e-5;
    Eigen::MatrixXd fd = (apply(net, x2 + h * v2) - apply(net, x2 - h * v2)) / (2.0 * h);
    Eigen::MatrixXd an = jvp(net, x2, v2);
    CHECK((an - fd).norm() / fd.norm() < 1e-6);
}

TEST_CASE("jvp: dot-product consistency with reverse mode") {
    Rng rng(4);
    MlpParams net = init_mlp({6, 5, 3}, rng);
    Eigen::MatrixXd x = rng.normal_matrix(3, 6);
    Eigen::MatrixXd v = rng.normal_matrix(3, 6);
    Eigen::MatrixXd g = rng.normal_matrix(3, 3);

    MlpForward f = forward(net, x);
    const double lhs = (jvp_forward(net, f, v).output().array() * g.array()).sum();
    BackpropResult back = backward(net, f, nullptr, g, nullptr);
    const double rhs = (back.g_input.array() * v.array()).sum();
    CHECK(std::abs(lhs - rhs) / std::abs(rhs) < 1e-10);
}

TEST_CASE("joint loss: lambda = 0 reduces to the reconstruction term") {
    GradCheckSetup s = make_setup(5, LossWeights{});
    JointGrads g = joint_loss_and_grads(s.x, s.xdot, s.mu, s.enc, s.dec, s.xi, s.spec,
                                        s.weights);
    CHECK(g.loss == g.loss_recon);
    CHECK(g.loss_sindy == 0.0);
    CHECK(g.loss_l1 == 0.0);
    CHECK(g.loss_consistency == 0.0);

    // Identity AE on a 2D bottleneck of 2D data reconstructs exactly: loss 0.
    MlpParams ident;
    ident.w = {Eigen::MatrixXd::Identity(2, 2)};
    ident.b = {Eigen::VectorXd::Zero(2)};
    Eigen::MatrixXd x(3, 2);
    x << 1, 2, -0.5, 0.25, 3, -1;
    LibrarySpec spec = gradcheck_spec(2);
    Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(spec.term_count(), 2);
    JointGrads g0 = joint_loss_and_grads(x, x, Eigen::VectorXd::Ones(3), ident, ident, xi,
                                         spec, LossWeights{});
    CHECK(g0.loss == 0.0);
}

TEST_CASE("joint loss: analytic gradients match central differences per block") {
    LossWeights weights;
    weights.lambda1 = 0.7;
    weights.lambda2 = 0.3;
    weights.lambda3 = 0.45;
    GradCheckSetup s = make_setup(11, weights);
    JointGrads g = joint_loss_and_grads(s.x, s.xdot, s.mu, s.enc, s.dec, s.xi, s.spec,
                                        s.weights);

    for (std::size_t l = 0; l < s.enc.w.size(); ++l) {
        CHECK(block_rel_error(s, s.enc.w[l].data(), s.enc.w[l].size(), g.enc.w[l].data()) <
              1e-6);
        CHECK(block_rel_error(s, s.enc.b[l].data(), s.enc.b[l].size(), g.enc.b[l].data()) <
              1e-6);
    }
    for (std::size_t l = 0; l < s.dec.w.size(); ++l) {
        CHECK(block_rel_error(s, s.dec.w[l].data(), s.dec.w[l].size(), g.dec.w[l].data()) <
              1e-6);
        CHECK(block_rel_error(s, s.dec.b[l].data(), s.dec.b[l].size(), g.dec.b[l].data()) <
              1e-6);
    }
    CHECK(block_rel_error(s, s.xi.data(), s.xi.size(), g.xi.data()) < 1e-6);
}

TEST_CASE("joint loss: gradients survive each single-term configuration") {
    for (int term = 0; term < 3; ++term) {
        LossWeights weights;
        if (term == 0) weights.lambda1 = 1.3;
        if (term == 1) weights.lambda2 = 0.9;
        if (term == 2) weights.lambda3 = 0.6;
        GradCheckSetup s = make_setup(17 + static_cast<std::uint64_t>(term), weights);
        JointGrads g = joint_loss_and_grads(s.x, s.xdot, s.mu, s.enc, s.dec, s.xi, s.spec,
                                            s.weights);
        CHECK(block_rel_error(s, s.enc.w[0].data(), s.enc.w[0].size(), g.enc.w[0].data()) <
              1e-6);
        CHECK(block_rel_error(s, s.dec.w[1].data(), s.dec.w[1].size(), g.dec.w[1].data()) <
              1e-6);
        CHECK(block_rel_error(s, s.xi.data(), s.xi.size(), g.xi.data()) < 1e-6);
    }
}

TEST_CASE("joint loss: non-finite input is reported as a numerical failure") {
    GradCheckSetup s = make_setup(23, LossWeights{});
    s.x(0, 0) = std::nan("");
    CHECK_THROWS_AS(joint_loss_and_grads(s.x, s.xdot, s.mu, s.enc, s.dec, s.xi, s.spec,
                                         s.weights),
                    NumericalFailure);
}

TEST_CASE("adam_step: zero gradient, unit step, monotone drift") {
    Eigen::MatrixXd p(2, 2);
    p << 1, 2, 3, 4;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
    AdamState st;
    adam_step(st, {{p.data(), p.size()}}, {{g.data(), g.size()}}, 0.1);
    CHECK(p(0, 0) == 1.0);
    CHECK(p(1, 1) == 4.0);

    // First step with |g| >> eps moves every entry by ~lr against sign(g).
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd gq(2, 2);
    gq << 5, -3, 0.5, -0.1;
    AdamState st2;
    adam_step(st2, {{q.data(), q.size()}}, {{gq.data(), gq.size()}}, 0.01);
    for (Eigen::Index i = 0; i < 4; ++i) {
        const double expected = -0.01 * (gq.reshaped()[i] > 0 ? 1.0 : -1.0);
        CHECK(q.reshaped()[i] == doctest::Approx(expected).epsilon(1e-6));
    }

    // Constant gradient: parameters drift monotonically against its sign.
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(1, 1);
    Eigen::MatrixXd gr = Eigen::MatrixXd::Constant(1, 1, 2.0);
    AdamState st3;
    double prev = 0.0;
    for (int k = 0; k < 10; ++k) {
        adam_step(st3, {{r.data(), r.size()}}, {{gr.data(), gr.size()}}, 0.05);
        CHECK(r(0, 0) < prev);
        prev = r(0, 0);
    }
}

TEST_CASE("train: bookkeeping, convergence, determinism") {
    // Planar limit cycle observed through a random 4-coordinate mix.
    Rng rng(31);
    const Eigen::Index rows = 256;
    Eigen::MatrixXd z(rows, 2), zdot(rows, 2);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double t = 0.05 * static_cast<double>(i);
        z(i, 0) = std::cos(t);
        z(i, 1) = std::sin(t);
        zdot(i, 0) = -std::sin(t);
        zdot(i, 1) = std::cos(t);
    }
    Eigen::MatrixXd mix = rng.normal_matrix(2, 4);
    TrainDataset data;
    data.x = z * mix;
    data.xdot = zdot * mix;
    data.mu = Eigen::VectorXd::Ones(rows);

    LibrarySpec spec;
    spec.state_dim = 2;
    spec.param_dim = 0;
    spec.state_degree = 1;
    spec.param_degree = 0;

    LossWeights weights;
    weights.lambda1 = 1e-4;
    weights.lambda2 = 1e-6;

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = static_cast<int>(rows);
    cfg.seed = 3;
    TrainResult one = train(data, {4, 8, 2}, {2, 8, 4}, spec, weights, cfg);
    CHECK(one.loss_history.size() == 1);  // one batch, one step, one entry
    CHECK(one.completed_epochs == 1);

    cfg.epochs = 400;
    cfg.batch_size = 64;
    cfg.learning_rate = 3e-3;
    TrainResult fit = train(data, {4, 8, 2}, {2, 8, 4}, spec, weights, cfg);
    CHECK_FALSE(fit.aborted);
    CHECK(fit.loss_history.back() < 0.01 * fit.loss_history.front());

    TrainResult again = train(data, {4, 8, 2}, {2, 8, 4}, spec, weights, cfg);
    CHECK(fit.loss_history == again.loss_history);  // bitwise-identical history
    for (std::size_t l = 0; l < fit.encoder.w.size(); ++l)
        CHECK(fit.encoder.w[l] == again.encoder.w[l]);

    // Trailing 10-epoch moving average does not increase at the end.
    auto avg = [&](std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = hi - 10; i < hi; ++i) s += fit.loss_history[i];
        return s / 10.0;
    };
    CHECK(avg(fit.loss_history.size()) <= avg(fit.loss_history.size() - 10) * 1.05);
}
