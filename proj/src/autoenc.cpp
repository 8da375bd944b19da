#include "sparsebif/autoenc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sparsebif {

namespace {

// ELU and its first two derivatives; value and slope are continuous at 0,
// with the slope at exactly 0 defined as 1.
inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_d1(double x) { return x > 0.0 ? 1.0 : std::exp(x); }
inline double elu_d2(double x) { return x > 0.0 ? 0.0 : std::exp(x); }

Eigen::MatrixXd map_elu(const Eigen::MatrixXd& z) { return z.unaryExpr(&elu); }
Eigen::MatrixXd map_elu_d1(const Eigen::MatrixXd& z) { return z.unaryExpr(&elu_d1); }
Eigen::MatrixXd map_elu_d2(const Eigen::MatrixXd& z) { return z.unaryExpr(&elu_d2); }

}  // namespace

std::vector<Eigen::Index> MlpParams::dims() const {
    std::vector<Eigen::Index> d;
    if (w.empty()) return d;
    d.push_back(w.front().cols());
    for (const auto& m : w) d.push_back(m.rows());
    return d;
}

void MlpParams::validate() const {
    if (w.size() != b.size() || w.empty()) throw InvalidInput("MlpParams: malformed layers");
    for (std::size_t l = 0; l < w.size(); ++l) {
        if (b[l].size() != w[l].rows()) throw InvalidInput("MlpParams: bias shape mismatch");
        if (l + 1 < w.size() && w[l + 1].cols() != w[l].rows())
            throw InvalidInput("MlpParams: inconsistent consecutive dims");
        if (!w[l].allFinite() || !b[l].allFinite())
            throw InvalidInput("MlpParams: non-finite parameters");
    }
}

MlpParams init_mlp(const std::vector<Eigen::Index>& layer_dims, Rng& rng) {
    if (layer_dims.size() < 2) throw InvalidInput("init_mlp: need at least two layers");
    for (auto d : layer_dims)
        if (d < 1) throw InvalidInput("init_mlp: layer dims must be positive");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const Eigen::Index fan_in = layer_dims[l];
        const Eigen::Index fan_out = layer_dims[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (Eigen::Index i = 0; i < fan_out; ++i)
            for (Eigen::Index j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-bound, bound);
        p.w.push_back(std::move(w));
        p.b.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return p;
}

MlpForward forward(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& x_rows) {
    if (x_rows.cols() != params.input_dim())
        throw InvalidInput("forward: input width does not match first layer");
    const std::size_t layers = params.layer_count();
    MlpForward f;
    f.act.reserve(layers + 1);
    f.pre.reserve(layers);
    f.act.push_back(x_rows);
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = f.act.back() * params.w[l].transpose();
        z.rowwise() += params.b[l].transpose();
        const bool last = l + 1 == layers;
        f.act.push_back(last ? z : map_elu(z));
        f.pre.push_back(std::move(z));
    }
    return f;
}

Eigen::MatrixXd apply(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& x_rows) {
    return forward(params, x_rows).act.back();
}

MlpTangent jvp_forward(const MlpParams& params, const MlpForward& fwd,
                       const Eigen::Ref<const Eigen::MatrixXd>& v_rows) {
    if (v_rows.rows() != fwd.act.front().rows() || v_rows.cols() != fwd.act.front().cols())
        throw InvalidInput("jvp_forward: tangent shape does not match input");
    const std::size_t layers = params.layer_count();
    MlpTangent t;
    t.tan.reserve(layers + 1);
    t.tpre.reserve(layers);
    t.tan.push_back(v_rows);
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd u = t.tan.back() * params.w[l].transpose();
        const bool last = l + 1 == layers;
        t.tan.push_back(last ? u : map_elu_d1(fwd.pre[l]).cwiseProduct(u).eval());
        t.tpre.push_back(std::move(u));
    }
    return t;
}

Eigen::MatrixXd jvp(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& x_rows,
                    const Eigen::Ref<const Eigen::MatrixXd>& v_rows) {
    MlpForward f = forward(params, x_rows);
    return jvp_forward(params, f, v_rows).tan.back();
}

MlpGrads zero_grads(const MlpParams& params) {
    MlpGrads g;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        g.w.push_back(Eigen::MatrixXd::Zero(params.w[l].rows(), params.w[l].cols()));
        g.b.push_back(Eigen::VectorXd::Zero(params.b[l].size()));
    }
    return g;
}

BackpropResult backward(const MlpParams& params, const MlpForward& fwd,
                        const MlpTangent* tangent,
                        const Eigen::Ref<const Eigen::MatrixXd>& g_output,
                        const Eigen::MatrixXd* g_tangent_output) {
    const std::size_t layers = params.layer_count();
    if (g_output.rows() != fwd.act.back().rows() || g_output.cols() != fwd.act.back().cols())
        throw InvalidInput("backward: g_output shape mismatch");
    const bool with_tangent = tangent != nullptr && g_tangent_output != nullptr;

    BackpropResult res;
    res.grads = zero_grads(params);
    Eigen::MatrixXd g_act = g_output;
    Eigen::MatrixXd g_tan;
    if (with_tangent) g_tan = *g_tangent_output;

    for (std::size_t l = layers; l-- > 0;) {
        const bool last = l + 1 == layers;
        // dL/d(pre-activation): through the primal path, plus (for hidden
        // layers on the tangent path) the activation's second derivative.
        Eigen::MatrixXd g_pre;
        Eigen::MatrixXd g_tpre;
        if (last) {
            g_pre = g_act;
            if (with_tangent) g_tpre = g_tan;
        } else {
            Eigen::MatrixXd d1 = map_elu_d1(fwd.pre[l]);
            g_pre = g_act.cwiseProduct(d1);
            if (with_tangent) {
                g_pre += g_tan.cwiseProduct(tangent->tpre[l]).cwiseProduct(map_elu_d2(fwd.pre[l]));
                g_tpre = g_tan.cwiseProduct(d1);
            }
        }

        res.grads.w[l] = g_pre.transpose() * fwd.act[l];
        if (with_tangent) res.grads.w[l] += g_tpre.transpose() * tangent->tan[l];
        res.grads.b[l] = g_pre.colwise().sum().transpose();

        g_act = g_pre * params.w[l];
        if (with_tangent) g_tan = g_tpre * params.w[l];
    }
    res.g_input = std::move(g_act);
    if (with_tangent) res.g_tangent_input = std::move(g_tan);
    return res;
}

JointGrads joint_loss_and_grads(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::MatrixXd>& xdot,
                                const Eigen::VectorXd& mu_per_row, const MlpParams& enc,
                                const MlpParams& dec, const Eigen::MatrixXd& xi,
                                const LibrarySpec& spec, const LossWeights& weights) {
    if (x.rows() == 0) throw InvalidInput("joint_loss_and_grads: empty batch");
    if (xdot.rows() != x.rows() || xdot.cols() != x.cols())
        throw InvalidInput("joint_loss_and_grads: xdot misaligned with x");
    if (mu_per_row.size() != x.rows())
        throw InvalidInput("joint_loss_and_grads: mu_per_row misaligned with x");
    if (weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0)
        throw InvalidInput("joint_loss_and_grads: negative loss weight");

    const bool need_enc_tangent = weights.lambda1 > 0.0;
    const bool need_sindy = weights.lambda1 > 0.0 || weights.lambda3 > 0.0;
    const bool need_dec_tangent = weights.lambda3 > 0.0;

    // Primal passes.
    MlpForward ef = forward(enc, x);
    const Eigen::MatrixXd& z = ef.output();
    MlpForward df = forward(dec, z);

    // Tangent passes and library.
    MlpTangent et;
    Eigen::MatrixXd zdot;
    if (need_enc_tangent) {
        et = jvp_forward(enc, ef, xdot);
        zdot = et.output();
    }
    Eigen::MatrixXd theta, zdot_hat;
    if (need_sindy) {
        theta = build_library(z, mu_per_row, spec);
        zdot_hat = theta * xi;
    }
    MlpTangent dt;
    if (need_dec_tangent) dt = jvp_forward(dec, df, zdot_hat);

    JointGrads out;
    out.loss_recon = (x - df.output()).squaredNorm();
    if (weights.lambda1 > 0.0)
        out.loss_sindy = weights.lambda1 * (zdot - zdot_hat).squaredNorm();
    if (weights.lambda2 > 0.0)
        out.loss_l1 = weights.lambda2 * xi.cwiseAbs().sum();
    if (weights.lambda3 > 0.0)
        out.loss_consistency = weights.lambda3 * (xdot - dt.output()).squaredNorm();
    out.loss = out.loss_recon + out.loss_sindy + out.loss_l1 + out.loss_consistency;

    if (!std::isfinite(out.loss_recon))
        throw NumericalFailure("joint loss: reconstruction term non-finite");
    if (!std::isfinite(out.loss_sindy))
        throw NumericalFailure("joint loss: sparse regression term non-finite");
    if (!std::isfinite(out.loss_l1)) throw NumericalFailure("joint loss: l1 term non-finite");
    if (!std::isfinite(out.loss_consistency))
        throw NumericalFailure("joint loss: consistency term non-finite");

    // Decoder backward: primal seed from reconstruction, tangent seed from the
    // consistency residual.
    Eigen::MatrixXd g_xrec = 2.0 * (df.output() - x);
    Eigen::MatrixXd g_xdot_hat;
    BackpropResult dback;
    if (need_dec_tangent) {
        g_xdot_hat = (2.0 * weights.lambda3) * (dt.output() - xdot);
        dback = backward(dec, df, &dt, g_xrec, &g_xdot_hat);
    } else {
        dback = backward(dec, df, nullptr, g_xrec, nullptr);
    }
    out.dec = std::move(dback.grads);

    // Gradient into xi and the library.
    Eigen::MatrixXd g_z = dback.g_input;
    out.xi = Eigen::MatrixXd::Zero(xi.rows(), xi.cols());
    if (need_sindy) {
        Eigen::MatrixXd g_zdot_hat = Eigen::MatrixXd::Zero(zdot_hat.rows(), zdot_hat.cols());
        if (weights.lambda1 > 0.0) g_zdot_hat += (2.0 * weights.lambda1) * (zdot_hat - zdot);
        if (need_dec_tangent) g_zdot_hat += dback.g_tangent_input;
        out.xi = theta.transpose() * g_zdot_hat;
        Eigen::MatrixXd g_theta = g_zdot_hat * xi.transpose();
        g_z += library_grad_vjp(z, mu_per_row, spec, g_theta);
    }
    if (weights.lambda2 > 0.0)
        out.xi += weights.lambda2 * xi.unaryExpr([](double v) {
            return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        });

    // Encoder backward; the tangent seed is the sparse-regression residual.
    BackpropResult eback;
    if (need_enc_tangent) {
        Eigen::MatrixXd g_zdot = (2.0 * weights.lambda1) * (zdot - zdot_hat);
        eback = backward(enc, ef, &et, g_z, &g_zdot);
    } else {
        eback = backward(enc, ef, nullptr, g_z, nullptr);
    }
    out.enc = std::move(eback.grads);
    return out;
}

TensorRefs flatten(MlpParams& p) {
    TensorRefs refs;
    for (auto& w : p.w) refs.push_back({w.data(), w.size()});
    for (auto& b : p.b) refs.push_back({b.data(), b.size()});
    return refs;
}

TensorCRefs flatten(const MlpGrads& g) {
    TensorCRefs refs;
    for (const auto& w : g.w) refs.push_back({w.data(), w.size()});
    for (const auto& b : g.b) refs.push_back({b.data(), b.size()});
    return refs;
}

void adam_step(AdamState& state, TensorRefs params, const TensorCRefs& grads, double lr) {
    if (params.size() != grads.size()) throw InvalidInput("adam_step: params/grads mismatch");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(Eigen::ArrayXd::Zero(p.size));
            state.v.emplace_back(Eigen::ArrayXd::Zero(p.size));
        }
    }
    if (state.m.size() != params.size()) throw InvalidInput("adam_step: state size mismatch");
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != grads[i].size || params[i].size != state.m[i].size())
            throw InvalidInput("adam_step: tensor shape mismatch");
        Eigen::Map<Eigen::ArrayXd> p(params[i].data, params[i].size);
        Eigen::Map<const Eigen::ArrayXd> g(grads[i].data, grads[i].size);
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.square();
        p -= lr * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + state.eps);
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidInput("TrainConfig: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidInput("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw InvalidInput("TrainConfig: batch_size must be >= 1");
}

TrainResult train(const TrainDataset& data, const std::vector<Eigen::Index>& encoder_dims,
                  const std::vector<Eigen::Index>& decoder_dims, const LibrarySpec& spec,
                  const LossWeights& weights, const TrainConfig& config,
                  const TrainResult* warm_start) {
    config.validate();
    spec.validate();
    if (data.x.rows() == 0) throw InvalidInput("train: empty dataset");
    if (encoder_dims.empty() || decoder_dims.empty())
        throw InvalidInput("train: missing layer dims");
    if (encoder_dims.front() != data.x.cols())
        throw InvalidInput("train: encoder input dim does not match data");
    if (encoder_dims.back() != static_cast<Eigen::Index>(spec.state_dim))
        throw InvalidInput("train: encoder output dim does not match library state_dim");
    if (decoder_dims.front() != encoder_dims.back() ||
        decoder_dims.back() != encoder_dims.front())
        throw InvalidInput("train: decoder dims must invert encoder dims");

    Rng rng(config.seed);
    TrainResult res;
    res.encoder = init_mlp(encoder_dims, rng);
    res.decoder = init_mlp(decoder_dims, rng);
    // xi gets the same Xavier treatment as a (term_count -> state_dim) layer.
    const Eigen::Index r = spec.term_count();
    const Eigen::Index n = spec.state_dim;
    const double bound = std::sqrt(6.0 / static_cast<double>(r + n));
    res.xi.resize(r, n);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < n; ++j) res.xi(i, j) = rng.uniform(-bound, bound);
    if (warm_start != nullptr) {
        if (warm_start->encoder.dims() != res.encoder.dims() ||
            warm_start->decoder.dims() != res.decoder.dims() ||
            warm_start->xi.rows() != r || warm_start->xi.cols() != n)
            throw InvalidInput("train: warm start shapes do not match");
        res.encoder = warm_start->encoder;
        res.decoder = warm_start->decoder;
        res.xi = warm_start->xi;
    }

    AdamState adam;
    const Eigen::Index rows = data.x.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), 0);

    MlpParams enc_ckpt = res.encoder, dec_ckpt = res.decoder;
    Eigen::MatrixXd xi_ckpt = res.xi;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle) {
            // Seeded Fisher-Yates; identical permutations for identical seeds.
            for (Eigen::Index i = rows - 1; i > 0; --i) {
                const auto j = static_cast<Eigen::Index>(rng.uniform() *
                                                         static_cast<double>(i + 1));
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(std::min(j, i))]);
            }
        }
        double epoch_loss = 0.0;
        bool failed = false;
        for (Eigen::Index start = 0; start < rows; start += config.batch_size) {
            const Eigen::Index bsz = std::min<Eigen::Index>(config.batch_size, rows - start);
            Eigen::MatrixXd bx(bsz, data.x.cols()), bxdot(bsz, data.x.cols());
            Eigen::VectorXd bmu(bsz);
            for (Eigen::Index i = 0; i < bsz; ++i) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
                bx.row(i) = data.x.row(src);
                bxdot.row(i) = data.xdot.row(src);
                bmu[i] = data.mu[src];
            }
            try {
                JointGrads g = joint_loss_and_grads(bx, bxdot, bmu, res.encoder, res.decoder,
                                                    res.xi, spec, weights);
                epoch_loss += g.loss;
                TensorRefs params = flatten(res.encoder);
                TensorRefs dec_params = flatten(res.decoder);
                params.insert(params.end(), dec_params.begin(), dec_params.end());
                params.push_back({res.xi.data(), res.xi.size()});
                TensorCRefs grads = flatten(g.enc);
                TensorCRefs dec_grads = flatten(g.dec);
                grads.insert(grads.end(), dec_grads.begin(), dec_grads.end());
                grads.push_back({g.xi.data(), g.xi.size()});
                adam_step(adam, params, grads, config.learning_rate);
            } catch (const NumericalFailure&) {
                failed = true;
                break;
            }
        }
        if (failed || !std::isfinite(epoch_loss)) {
            res.encoder = enc_ckpt;
            res.decoder = dec_ckpt;
            res.xi = xi_ckpt;
            res.aborted = true;
            return res;
        }
        res.loss_history.push_back(epoch_loss);
        res.completed_epochs = epoch + 1;
        enc_ckpt = res.encoder;
        dec_ckpt = res.decoder;
        xi_ckpt = res.xi;
    }
    return res;
}

}  // namespace sparsebif
