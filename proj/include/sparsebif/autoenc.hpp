#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "sparsebif/numkit.hpp"
#include "sparsebif/sindy.hpp"

namespace sparsebif {

/// Fully connected network: ELU on hidden layers, identity on the output
/// layer. Weights are stored per layer as (out x in).
struct MlpParams {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;

    std::size_t layer_count() const { return w.size(); }
    Eigen::Index input_dim() const { return w.empty() ? 0 : w.front().cols(); }
    Eigen::Index output_dim() const { return w.empty() ? 0 : w.back().rows(); }
    std::vector<Eigen::Index> dims() const;
    void validate() const;
};

/// Xavier-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
MlpParams init_mlp(const std::vector<Eigen::Index>& layer_dims, Rng& rng);

/// Forward pass with cached activations and pre-activations for backprop.
/// act[0] is the input batch, act.back() the output; pre[l] is the layer-l
/// pre-activation.
struct MlpForward {
    std::vector<Eigen::MatrixXd> act;
    std::vector<Eigen::MatrixXd> pre;
    const Eigen::MatrixXd& output() const { return act.back(); }
};

MlpForward forward(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& x_rows);

/// Forward pass without caches.
Eigen::MatrixXd apply(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& x_rows);

/// Forward-mode tangent sweep reusing a cached forward pass. tan[0] is the
/// input tangent batch, tan.back() the output tangent; tpre[l] the tangent
/// pre-activation of layer l.
struct MlpTangent {
    std::vector<Eigen::MatrixXd> tan;
    std::vector<Eigen::MatrixXd> tpre;
    const Eigen::MatrixXd& output() const { return tan.back(); }
};

MlpTangent jvp_forward(const MlpParams& params, const MlpForward& fwd,
                       const Eigen::Ref<const Eigen::MatrixXd>& v_rows);

/// Jacobian-vector product of the network at x along v (row-wise batches).
Eigen::MatrixXd jvp(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& x_rows,
                    const Eigen::Ref<const Eigen::MatrixXd>& v_rows);

struct MlpGrads {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

MlpGrads zero_grads(const MlpParams& params);

struct BackpropResult {
    MlpGrads grads;
    Eigen::MatrixXd g_input;          // dL/d(input batch)
    Eigen::MatrixXd g_tangent_input;  // dL/d(input tangent), empty without tangent
};

/// Reverse-mode sweep through the primal pass and, when `tangent` and
/// `g_tangent_output` are given, simultaneously through the tangent pass.
/// The tangent path contributes second-derivative terms of the activation,
/// which is what differentiating a Jacobian-vector product requires.
BackpropResult backward(const MlpParams& params, const MlpForward& fwd,
                        const MlpTangent* tangent,
                        const Eigen::Ref<const Eigen::MatrixXd>& g_output,
                        const Eigen::MatrixXd* g_tangent_output);

/// Weights of the three auxiliary terms in the joint loss.
struct LossWeights {
    double lambda1 = 0.0;  // sparse regression residual
    double lambda2 = 0.0;  // l1 penalty on xi
    double lambda3 = 0.0;  // full-state consistency residual
};

struct JointGrads {
    double loss = 0.0;
    double loss_recon = 0.0;
    double loss_sindy = 0.0;
    double loss_l1 = 0.0;
    double loss_consistency = 0.0;
    MlpGrads enc;
    MlpGrads dec;
    Eigen::MatrixXd xi;
};

/// Joint SINDy-autoencoder loss and its exact gradients:
///   ||x - dec(enc(x))||^2 + l1 ||zdot - Theta(z; mu) xi||^2 + l2 ||xi||_1
///   + l3 ||xdot - J_dec(z) Theta(z; mu) xi||^2,   zdot = J_enc(x) xdot,
/// with squared norms summed over the batch, and the l1 subgradient taken as
/// 0 at 0. Throws NumericalFailure naming the first non-finite term.
JointGrads joint_loss_and_grads(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::MatrixXd>& xdot,
                                const Eigen::VectorXd& mu_per_row, const MlpParams& enc,
                                const MlpParams& dec, const Eigen::MatrixXd& xi,
                                const LibrarySpec& spec, const LossWeights& weights);

/// ADAM moment accumulators over a flat list of parameter tensors.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Eigen::ArrayXd> m;
    std::vector<Eigen::ArrayXd> v;
};

struct TensorRef {
    double* data = nullptr;
    Eigen::Index size = 0;
};
struct TensorCRef {
    const double* data = nullptr;
    Eigen::Index size = 0;
};
using TensorRefs = std::vector<TensorRef>;
using TensorCRefs = std::vector<TensorCRef>;

TensorRefs flatten(MlpParams& p);
TensorCRefs flatten(const MlpGrads& g);

/// Standard bias-corrected ADAM update, in place. Accumulators are sized on
/// first use and must shape-match afterwards.
void adam_step(AdamState& state, TensorRefs params, const TensorCRefs& grads, double lr);

struct TrainConfig {
    int epochs = 1;
    double learning_rate = 1e-3;
    int batch_size = 64;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

/// Row-aligned training set: AE inputs, their time derivatives, parameter
/// value per row.
struct TrainDataset {
    Eigen::MatrixXd x;
    Eigen::MatrixXd xdot;
    Eigen::VectorXd mu;
};

struct TrainResult {
    MlpParams encoder;
    MlpParams decoder;
    Eigen::MatrixXd xi;
    std::vector<double> loss_history;  // per-epoch total loss
    bool aborted = false;              // hit a non-finite loss; params are the
                                       // last finite epoch's checkpoint
    int completed_epochs = 0;
};

/// Mini-batch ADAM over (encoder, decoder, xi) jointly. Shuffling is seeded
/// and batches are visited in order, so runs are bitwise reproducible.
/// A warm start continues from existing parameters (fresh ADAM moments),
/// which is how lower-learning-rate refinement phases are run.
TrainResult train(const TrainDataset& data, const std::vector<Eigen::Index>& encoder_dims,
                  const std::vector<Eigen::Index>& decoder_dims, const LibrarySpec& spec,
                  const LossWeights& weights, const TrainConfig& config,
                  const TrainResult* warm_start = nullptr);

}  // namespace sparsebif
