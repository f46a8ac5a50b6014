#pragma once
// Finite groups as materialised tables: cyclic rotations C4, torus translations
// Z_H x Z_W, and their semidirect product p4. Grid actions are stored as
// per-element permutations of the H*W torus indices, so acting on feature maps
// is an exact permutation (norm-preserving, bit-strict).
#include <cstdint>
#include <string>
#include <vector>

#include "symmetria/tensor.hpp"

namespace symmetria {

struct GroupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FiniteGroup {
    int order = 0;
    int identity = 0;
    std::vector<int> compose_table;  // order*order, row-major [a*order+b] = a∘b
    std::vector<int> inverse_table;  // order

    int compose(int a, int b) const { return compose_table[static_cast<size_t>(a) * order + b]; }
    int inverse(int a) const { return inverse_table[static_cast<size_t>(a)]; }
    // exhaustive associativity / identity / inverse laws; throws on violation
    void check_axioms() const;
};

struct GridAction {
    int H = 0, W = 0;
    // permutation[g * H*W + p] = flat index of g acting on grid point p
    std::vector<int> permutation;
    int apply(int g, int p) const { return permutation[static_cast<size_t>(g) * H * W + p]; }
};

// A group together with its torus-grid realisation. rotation_order is the size
// of the rotation component (1 for pure translations, 4 for p4); elements are
// indexed (s * H + a) * W + b for rotation s and translation (a, b).
struct GridGroup {
    FiniteGroup group;
    GridAction action;
    int rotation_order = 1;
    int H = 0, W = 0;

    int element(int s, int a, int b) const { return (s * H + a) * W + b; }
    int rot_of(int g) const { return g / (H * W); }
    int shift_row(int g) const { return (g / W) % H; }
    int shift_col(int g) const { return g % W; }

    // Feature-map slot convention: slot (s, q) holds the element h with
    // rotation s whose grid action maps the origin to q. Under this indexing
    // the spatial part of the regular representation is exactly the grid
    // action of g^{-1}, so plain and group feature maps transform coherently.
    int slot_to_element(int s, int qx, int qy) const;
    void element_to_slot(int g, int& s, int& qx, int& qy) const;
};

FiniteGroup build_cyclic(int n);
GridGroup build_translation(int H, int W);
GridGroup build_p4(int H, int W);  // requires H == W

// 90-degree rotation of a torus index (x, y) -> (y, W-1-x); s applications
void rotate_index(int s, int H, int W, int x, int y, int& rx, int& ry);
// rotation of a relative offset (pure linear part): (a, b) -> (b, -a)
void rotate_offset(int s, int a, int b, int& ra, int& rb);

// Regular-representation action on a feature map of shape B x C x R x H x W,
// where R is 1 (plain Z^2 features; spatial permutation only) or the group's
// rotation order (group features; rotation axis cyclically shifted as well).
Tensor act(const GridGroup& gg, int element, const Tensor& feature);

// the same action as a flat gather map over a B x C x R x H x W tensor
std::vector<int64_t> act_index_map(const GridGroup& gg, int element, const Shape& feature_shape);

}  // namespace symmetria
