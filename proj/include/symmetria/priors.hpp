#pragma once
// Per-branch Gaussian prior blocks. Each block is an isotropic N(0, sigma^2 I)
// over the trainable tensors it governs, parameterised by rho = log(1/sigma^2)
// so precision updates are unconstrained. Dense branches put the prior on the
// weights; RBF branches either on the anchor values (default, one block for
// u/z/omega together) or on the lengthscale omega alone, in which case the
// remaining tensors sit under a fixed unit-variance companion block.
#include <cstdint>
#include <string>
#include <vector>

#include "symmetria/layers.hpp"

namespace symmetria {

enum class PriorPlacement { OnWeights, OnAnchorValues, OnLengthscales };

std::string placement_name(PriorPlacement p);
PriorPlacement placement_from(const std::string& s);

struct PriorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PriorBlock {
    std::string name;  // "L0.CONV", "L2.SCONV.ls", ...
    int layer = -1, branch = -1;
    PriorPlacement placement = PriorPlacement::OnWeights;
    std::vector<std::string> governed;  // trainable tensor names in Network::params
    int64_t P = 0;                      // total governed parameter count
    double rho = 0.0;                   // log precision
    bool learnable = true;

    std::string csv_name() const;  // "rho_L0_CONV"
};

struct PriorConfig {
    double sigma_init = 1.0;
    PriorPlacement s_placement = PriorPlacement::OnAnchorValues;  // SCONV / SFC branches
};

// rho excursions are clamped to this range by hyper updates (configs may pin
// fixed rho outside it, e.g. near-delta priors in strict-symmetry checks)
inline constexpr double kRhoMin = -16.0, kRhoMax = 16.0;

class PriorSet {
public:
    std::vector<PriorBlock> blocks;

    static PriorSet build(const Network& net, const PriorConfig& cfg);

    // index of the block governing a parameter tensor; throws if unowned
    int block_of(const std::string& param) const;

    double log_prior(const ParamStore& params) const;
    std::vector<double> block_sq_norms(const ParamStore& params) const;  // ||v_b||^2
    // gradient of -log p(theta): adds e^rho * v into the map entries
    void add_neg_log_prior_grad(const ParamStore& params, GradientMap& grads) const;

    std::vector<int> learnable_indices() const;
};

}  // namespace symmetria
