#pragma once
// Laplace marginal-likelihood objective over prior precisions. Curvature
// enters only through per-block Kronecker eigen-products h = lambda*mu/rows;
// parameters with no curvature (anchor locations, lengthscales, or whole
// blocks without data support) contribute pure log(alpha) volume terms. All
// quantities are closed-form in alpha = e^rho once spectra are fixed, which is
// what makes the exact per-block hyper step cheap.
#include <cstdint>
#include <string>
#include <vector>

#include "symmetria/curvature.hpp"
#include "symmetria/priors.hpp"

namespace symmetria {

struct LaplaceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BlockSpectrum {
    int prior_block = -1;
    std::vector<double> products;  // h_i >= 0, eigenvalue clamp below 1e-10 applied
    int64_t zero_dims = 0;         // prior-only dimensions
};

// one spectrum per prior block, aligned with PriorSet::blocks
std::vector<BlockSpectrum> block_spectra(const std::vector<CurvatureBlock>& curv,
                                         const PriorSet& priors);

struct MarglikParts {
    double nll = 0, log_prior = 0, half_logdet = 0, const_term = 0;
    double total = 0;  // nll - log_prior + half_logdet + const_term
};

// rho and vsq are per prior block (vsq = ||v_b||^2 at the current weights)
MarglikParts marglik(double nll, const std::vector<PriorBlock>& blocks,
                     const std::vector<double>& rho, const std::vector<double>& vsq,
                     const std::vector<BlockSpectrum>& spectra);

// d(total)/d(rho_b) for every block (callers pick the learnable ones)
std::vector<double> marglik_hypergrad(const std::vector<PriorBlock>& blocks,
                                      const std::vector<double>& rho, const std::vector<double>& vsq,
                                      const std::vector<BlockSpectrum>& spectra);

// effective parameter count gamma_b = sum_i h_i / (h_i + alpha_b)
std::vector<double> effective_params(const std::vector<PriorBlock>& blocks,
                                     const std::vector<double>& rho,
                                     const std::vector<BlockSpectrum>& spectra);

// dense oracles on explicit Hessian blocks (test harness for the closed forms)
double dense_half_logdet(const Tensor& H, double alpha);  // 0.5 * logdet(H + alpha I)
double dense_gamma(const Tensor& H, double alpha);        // P - alpha * tr((H + alpha I)^-1)

// per-layer symmetry attribution
struct BranchShare {
    std::string kind;
    double precision = 0;  // e^rho of the branch's learnable block
    double gamma = 0;
    int64_t P = 0;
    double share = 0;  // (gamma/P) normalised within the layer
};
struct LayerShare {
    int layer = -1;
    std::vector<BranchShare> branches;
    int dominant = 0;  // argmax share
};
struct SymmetryReport {
    std::vector<LayerShare> layers;  // pathway layers (heads excluded)
};

SymmetryReport symmetry_report(const Network& net, const PriorSet& priors,
                               const std::vector<double>& rho,
                               const std::vector<BlockSpectrum>& spectra);

int argmax_share(const std::vector<double>& shares);

}  // namespace symmetria
