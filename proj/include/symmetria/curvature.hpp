#pragma once
// Kronecker-factored curvature (GGN with the log-likelihood Hessian at the
// model's own predictions). Every weight-carrying branch tensor yields one
// block F ~ (1/rows) * A (x) B, where A sums input-side outer products over
// samples x positions and B sums Lambda-weighted output-gradient outer
// products over the same rows. Gradients are collected with K batched backward
// sweeps per chunk, seeding one class row of the logits at a time; samples are
// independent, so interior-node gradients decompose per sample. RBF branches
// project their factors through the current design matrix Phi; anchor
// locations and lengthscales deliberately carry no curvature (prior-only
// dimensions handled by the marginal-likelihood assembly).
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "symmetria/layers.hpp"

namespace symmetria {

struct CurvatureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Lambda = diag(p) - p p^T for one softmax row
Tensor loglik_hessian(const Tensor& probs_row);

// how a flat parameter index splits into (input-side d, output-side g)
enum class FactorLayout {
    DenseFC,     // w (Co,Ci,P',P): g = co*P + p', d = ci*P + p
    OutLeading,  // w (G, D) row-major
    InLeading,   // w (D, G) row-major
};

struct CurvatureBlock {
    std::string param;  // tensor name in Network::params
    int layer = -1, branch = -1;
    BranchKind kind = BranchKind::FC;
    FactorLayout layout = FactorLayout::OutLeading;
    int64_t D = 0, G = 0;
    int64_t fcP = 1, fcCi = 1;  // DenseFC decode extents
    Tensor A;            // D x D, summed over rows
    Tensor B;            // G x G, summed over rows
    int64_t rows = 0;    // N * positions; block estimate is (A x B) / rows

    void d_g_of(int64_t flat, int64_t& d, int64_t& g) const;
};

// one full pass over the dataset; chunked to bound memory
std::vector<CurvatureBlock> kfac_blocks(const Network& net, const Tensor& images, int chunk_size = 128);

// dense P x P expansion in parameter-flat order (test oracle, small blocks)
Tensor expand_kronecker(const CurvatureBlock& blk);

// exact per-tensor GGN via per-sample Jacobians (tiny instances only)
std::map<std::string, Tensor> exact_ggn(const Network& net, const Tensor& images);

// RBF projections: columns (I_channels x Phi) on the input side, Phi^T B Phi
// on the output side
Tensor project_columns(const Tensor& A, const Tensor& Phi, int64_t channels);
Tensor project_matrix(const Tensor& B, const Tensor& Phi);

}  // namespace symmetria
