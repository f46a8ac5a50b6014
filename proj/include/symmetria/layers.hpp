#pragma once
// Residual-pathway layers: every layer is a sum of branch outputs, each branch
// a linear map of a different symmetry class (dense FC, factored FC, circular
// CONV, their stationary RBF-basis variants, and p4 group convolutions).
// Feature maps are uniformly B x C x R x H x W with R the rotation axis
// (R = 1 for plain nets). Two parallel implementations exist on purpose: the
// free *_forward functions are direct index loops used as oracles and as the
// public op surface; Network::build emits the same maps as autodiff graphs.
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "symmetria/graph.hpp"
#include "symmetria/groups.hpp"

namespace symmetria {

enum class BranchKind { FC, FFC, SFC, CONV, SCONV, GCONV, PGCONV };

std::string branch_kind_name(BranchKind k);
BranchKind branch_kind_from(const std::string& s);

struct LayerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// direct-forward public ops (loop implementations, used as graph oracles)
// ---------------------------------------------------------------------------

// x: B x C x H x W (or B x C x R x H x W with channels folded by the caller)
Tensor fc_forward(const Tensor& theta, const Tensor& x);       // theta: C'xCxHxWxHxW
Tensor conv_forward(const Tensor& w, const Tensor& x);         // w: C'xCxSxS, circular
Tensor ffc_forward(const Tensor& t1, const Tensor& t2, const Tensor& x);  // t1,t2: C'xCxHxW

// RBF basis: filter(c',c,i) = sum_j u(c',c,j) * exp(-omega^2 ||domain_i - z_j||^2)
Tensor materialize_filter(const Tensor& u, const Tensor& z, double omega,
                          const std::vector<std::array<double, 2>>& domain);
std::vector<std::array<double, 2>> offset_domain(int S);       // centered SxS offsets
std::vector<std::array<double, 2>> grid_domain(int H, int W);  // full 2-d grid

Tensor sconv_forward(const Tensor& u, const Tensor& z, double omega, int S, const Tensor& x);
Tensor sfc_forward(const Tensor& u1, const Tensor& z1, double omega1,
                   const Tensor& u2, const Tensor& z2, double omega2, const Tensor& x);

// group convolution on p4: w C'xCxR_inxSxS, x B x C x R_in x H x W (R_in = 1 lifts)
Tensor gconv_forward(const Tensor& w, const Tensor& x, const GridGroup& p4);
// pointwise variant: w C'xCxSxS applied per rotation slice with a rotated filter
Tensor pgconv_forward(const Tensor& w, const Tensor& x, const GridGroup& p4);

// polyphase-anchored stride-2 pooling; x B x C x R x H x W or B x C x H x W
Tensor polyphase_pool(const Tensor& x, bool* tie = nullptr, int* component = nullptr);

// ---------------------------------------------------------------------------
// patch index maps (im2col-style gathers shared by graphs and curvature)
// ---------------------------------------------------------------------------

// out (B, H*W, C*R*S*S) over x (B,C,R,H,W); D ordering ((c,r), dy, dx)
std::vector<int64_t> conv_patch_map(int64_t B, int64_t C, int64_t R, int64_t H, int64_t W, int S);
// out (B, R*H*W, C*R_in*S*S) over x (B,C,R_in,H,W); filter slots (m, dy, dx)
std::vector<int64_t> gconv_patch_map(const GridGroup& p4, int64_t B, int64_t C, int64_t R_in, int S);
// out (B, R*H*W, C*S*S): per-slice patches with the offset rotated by the slice
std::vector<int64_t> pgconv_patch_map(const GridGroup& p4, int64_t B, int64_t C, int S);

// ---------------------------------------------------------------------------
// network assembly
// ---------------------------------------------------------------------------

struct BranchSpec {
    BranchKind kind = BranchKind::CONV;
    int C_in = 0, C_out = 0;
    int H = 0, W = 0;    // spatial extent at this layer
    int R = 1;           // rotation axis of the feature maps
    int S = 3;           // filter size (CONV / SCONV / GCONV / PGCONV)
    int M1 = 0, M2 = 0;  // RBF anchor counts (SCONV: M1; SFC: output/input factor)
    bool trainable_locations = true;

    int64_t param_count() const;  // closed form, checked against stored tensors
};

// tensors owned by a branch: name suffix, shape, trainability
struct TensorPlan {
    std::string tensor;
    Shape shape;
    bool trainable = true;
};
std::vector<TensorPlan> branch_tensors(const BranchSpec& sp);

using ParamStore = std::map<std::string, Tensor>;

struct LayerInfo {
    std::vector<BranchSpec> branches;
    int C_in = 0, C_out = 0, H = 0, W = 0, R = 1;
    bool relu = true;
    bool pool = false;  // polyphase stride-2 pool after the branch sum
    bool head = false;  // 1x1 dense stage after global pooling
};

// per-branch graph handles the curvature code reads after forward/backward
struct BranchTap {
    BranchKind kind;
    std::vector<std::string> params;  // tensor names in Network::params
    int out = -1;                     // branch output node
    int x1 = -1;                      // FFC/SFC intermediate (B, C_out_eff, C_in_eff)
    int patches = -1;                 // conv-family patch node (B, T, D)
    int phi1 = -1, phi2 = -1;         // RBF design matrices (|domain| x M)
    int weight = -1;                  // materialised / reshaped weight matrix node
};

struct LayerTap {
    int in = -1;    // layer input node (B,C,R,H,W)
    int out = -1;   // branch sum, pre-ReLU
    std::vector<BranchTap> branches;
};

struct BuiltNet {
    Graph g;
    int input = -1;    // B x C_in x 1 x H x W
    int onehot = -1;   // B x K
    int logits = -1;   // B x K
    int nll_sum = -1;  // scalar: -sum_b log p(y_b | x_b)
    int batch = 0;
    std::vector<LayerTap> layers;
};

class Network {
public:
    int in_channels = 1, spatial = 0, classes = 0, R = 1;
    std::vector<LayerInfo> layers;
    std::map<std::string, Tensor> params;  // stable addresses; graphs bind pointers

    void init_params(uint64_t seed);
    BuiltNet build(int batch) const;
    int64_t param_count() const;
    std::string param_name(int layer, int branch, const std::string& tensor) const;
    const GridGroup& p4_at(int spatial_size) const;  // built lazily, cached

    // forward helpers used by evaluation and the check suites
    Tensor logits_for(const Tensor& images) const;  // images B x C x H x W

private:
    mutable std::map<int, std::shared_ptr<GridGroup>> p4_cache_;
};

struct ArchConfig {
    int alpha = 4;
    int spatial = 12;
    int in_channels = 1;
    int classes = 4;
    int filter_size = 3;
    std::vector<std::vector<BranchKind>> menus;  // one menu per pathway layer, or
                                                 // a single menu broadcast to all
    bool trainable_locations = true;
};

// widening conv stack with polyphase pools down to odd/unit spatial size, a
// full-support layer when the cascade bottoms out at an odd size, global
// average pooling, and a two-stage dense head
Network build_architecture(const ArchConfig& cfg);

int pathway_layer_count(int spatial);  // layers that carry a branch menu

}  // namespace symmetria
