#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsebif/numkit.hpp"

namespace sparsebif {

/// Polynomial candidate library: all monomials in the state of total degree
/// <= state_degree, each multiplied by mu^k for k = 0..param_degree.
/// Columns are ordered graded-lexicographically in the state monomial, then
/// by ascending parameter power. include_bias = false drops the constant
/// state monomial (and with it every pure mu^k column).
struct LibrarySpec {
    int state_dim = 0;
    int param_dim = 0;  // 0 (nonparametric) or 1
    int state_degree = 0;
    int param_degree = 0;
    bool include_bias = true;

    Eigen::Index term_count() const;
    void validate() const;
};

/// One candidate function: product of state powers times mu^mu_pow.
struct LibraryTerm {
    std::vector<int> z_pow;
    int mu_pow = 0;
};

std::vector<LibraryTerm> library_terms(const LibrarySpec& spec);
std::string term_name(const LibraryTerm& term);

/// Candidate-function evaluations; rows follow z_rows, columns follow
/// library_terms order.
Eigen::MatrixXd build_library(const Eigen::Ref<const Eigen::MatrixXd>& z_rows,
                              const Eigen::VectorXd& mu_per_row, const LibrarySpec& spec);

/// Reverse-mode helper: given dL/dTheta, accumulate dL/dZ row-wise.
Eigen::MatrixXd library_grad_vjp(const Eigen::Ref<const Eigen::MatrixXd>& z_rows,
                                 const Eigen::VectorXd& mu_per_row, const LibrarySpec& spec,
                                 const Eigen::Ref<const Eigen::MatrixXd>& g_theta);

/// Sparse coefficients over a library. Every nonzero entry of xi has
/// magnitude >= threshold.
struct SindyModel {
    LibrarySpec spec;
    Eigen::MatrixXd xi;  // term_count x state_dim
    double threshold = 0.0;
    std::string notes;
};

struct SparseFit {
    Eigen::MatrixXd xi;
    std::vector<std::uint8_t> column_zeroed;  // per output column: support died
};

/// Sequentially thresholded least squares. Per output column: solve the
/// ridge-regularized least-squares problem, zero entries below tau, re-solve
/// on the surviving support, until the support is stable (it can only shrink,
/// so max_iter is a safety bound, not a tuning knob).
SparseFit stlsq(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                const Eigen::Ref<const Eigen::MatrixXd>& zdot, double tau,
                double ridge = 1e-10, int max_iter = 20);

struct EnsembleConfig {
    int n_models = 1;
    double sample_fraction = 1.0;   // rows drawn (with replacement) per model
    int library_drop_count = 0;     // columns removed per model
    enum class Aggregation { median, mean };
    Aggregation aggregation = Aggregation::median;
    std::uint64_t seed = 0;
};

/// Bagged + library-ensembled STLSQ: n_models fits on bootstrapped rows with
/// randomly dropped columns (treated as zero coefficients), aggregated
/// entrywise and hard-thresholded at tau.
SparseFit ensemble_stlsq(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                         const Eigen::Ref<const Eigen::MatrixXd>& zdot, double tau,
                         double ridge, const EnsembleConfig& cfg);

/// RK4 integration of z' = Theta(z; mu) Xi.
Eigen::MatrixXd simulate(const SindyModel& model, const Eigen::VectorXd& z0, double mu,
                         const TimeGrid& grid);

/// One line per latent variable, terms in library order, coefficients to
/// three decimals, zero terms omitted.
std::string equations_to_text(const SindyModel& model);

}  // namespace sparsebif
