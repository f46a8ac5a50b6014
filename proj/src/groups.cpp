#include "symmetria/groups.hpp"

namespace symmetria {

void FiniteGroup::check_axioms() const {
    const int n = order;
    if (static_cast<int>(compose_table.size()) != n * n || static_cast<int>(inverse_table.size()) != n)
        throw GroupError("group tables have wrong size");
    for (int a = 0; a < n; ++a) {
        if (compose(identity, a) != a || compose(a, identity) != a)
            throw GroupError("identity law violated at element " + std::to_string(a));
        if (compose(a, inverse(a)) != identity || compose(inverse(a), a) != identity)
            throw GroupError("inverse law violated at element " + std::to_string(a));
    }
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                if (compose(compose(a, b), c) != compose(a, compose(b, c)))
                    throw GroupError("associativity violated");
}

FiniteGroup build_cyclic(int n) {
    FiniteGroup g;
    g.order = n;
    g.identity = 0;
    g.compose_table.resize(static_cast<size_t>(n) * n);
    g.inverse_table.resize(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        g.inverse_table[static_cast<size_t>(a)] = (n - a) % n;
        for (int b = 0; b < n; ++b) g.compose_table[static_cast<size_t>(a) * n + b] = (a + b) % n;
    }
    return g;
}

void rotate_index(int s, int H, int W, int x, int y, int& rx, int& ry) {
    if (H != W && s % 4 != 0) throw GroupError("rotation requires a square grid");
    rx = x; ry = y;
    for (int i = 0; i < ((s % 4) + 4) % 4; ++i) {
        const int nx = ry;
        const int ny = W - 1 - rx;
        rx = nx; ry = ny;
    }
}

void rotate_offset(int s, int a, int b, int& ra, int& rb) {
    ra = a; rb = b;
    for (int i = 0; i < ((s % 4) + 4) % 4; ++i) {
        const int na = rb;
        const int nb = -ra;
        ra = na; rb = nb;
    }
}

namespace {

int mod(int a, int m) { return ((a % m) + m) % m; }

GridGroup build_grid_group(int R, int H, int W) {
    GridGroup gg;
    gg.rotation_order = R;
    gg.H = H;
    gg.W = W;
    const int n = R * H * W;
    gg.group.order = n;
    gg.group.identity = 0;
    gg.group.compose_table.resize(static_cast<size_t>(n) * n);
    gg.group.inverse_table.resize(static_cast<size_t>(n));

    // element g = (s, (a, b)) acts on grid points by q -> rot^s(q) + (a, b).
    // composition: (s1,t1)∘(s2,t2) = (s1+s2, t1 + M^{s1} t2) with M the linear
    // part of the rotation; inverse: (-s, -M^{-s} t).
    for (int s1 = 0; s1 < R; ++s1)
        for (int a1 = 0; a1 < H; ++a1)
            for (int b1 = 0; b1 < W; ++b1) {
                const int g1 = gg.element(s1, a1, b1);
                for (int s2 = 0; s2 < R; ++s2)
                    for (int a2 = 0; a2 < H; ++a2)
                        for (int b2 = 0; b2 < W; ++b2) {
                            const int g2 = gg.element(s2, a2, b2);
                            int ra, rb;
                            rotate_offset(s1, a2, b2, ra, rb);
                            gg.group.compose_table[static_cast<size_t>(g1) * n + g2] =
                                gg.element((s1 + s2) % R, mod(a1 + ra, H), mod(b1 + rb, W));
                        }
                const int si = (R - s1) % R;
                int ia, ib;
                rotate_offset(si, a1, b1, ia, ib);
                gg.group.inverse_table[static_cast<size_t>(g1)] = gg.element(si, mod(-ia, H), mod(-ib, W));
            }

    gg.action.H = H;
    gg.action.W = W;
    gg.action.permutation.resize(static_cast<size_t>(n) * H * W);
    for (int s = 0; s < R; ++s)
        for (int a = 0; a < H; ++a)
            for (int b = 0; b < W; ++b) {
                const int g = gg.element(s, a, b);
                for (int x = 0; x < H; ++x)
                    for (int y = 0; y < W; ++y) {
                        int rx, ry;
                        rotate_index(s, H, W, x, y, rx, ry);
                        gg.action.permutation[static_cast<size_t>(g) * H * W + x * W + y] =
                            mod(rx + a, H) * W + mod(ry + b, W);
                    }
            }
    return gg;
}

}  // namespace

int GridGroup::slot_to_element(int s, int qx, int qy) const {
    int cx, cy;
    rotate_index(s, H, W, 0, 0, cx, cy);  // image of the origin under rot^s
    return element(s, mod(qx - cx, H), mod(qy - cy, W));
}

void GridGroup::element_to_slot(int g, int& s, int& qx, int& qy) const {
    s = rot_of(g);
    int cx, cy;
    rotate_index(s, H, W, 0, 0, cx, cy);
    qx = mod(shift_row(g) + cx, H);
    qy = mod(shift_col(g) + cy, W);
}

GridGroup build_translation(int H, int W) { return build_grid_group(1, H, W); }

GridGroup build_p4(int H, int W) {
    if (H != W) throw GroupError("p4 requires a square grid, got " + std::to_string(H) + "x" + std::to_string(W));
    return build_grid_group(4, H, W);
}

std::vector<int64_t> act_index_map(const GridGroup& gg, int element, const Shape& shape) {
    if (element < 0 || element >= gg.group.order) throw GroupError("group element index out of range");
    if (shape.size() != 5) throw GroupError("act expects B x C x R x H x W, got " + shape_str(shape));
    const int64_t B = shape[0], C = shape[1], R = shape[2], H = shape[3], W = shape[4];
    if (H != gg.H || W != gg.W) throw GroupError("act: grid size mismatch");
    if (R != 1 && R != gg.rotation_order)
        throw GroupError("act: feature rotation axis " + std::to_string(R) +
                         " incompatible with group rotation order " + std::to_string(gg.rotation_order));
    const int ginv = gg.group.inverse(element);
    const int sg = gg.rot_of(element);
    std::vector<int64_t> map(static_cast<size_t>(numel(shape)));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t r = 0; r < R; ++r) {
                // (L_g x)(c, s, p) = x(c, s - s_g, g^{-1}·p); R = 1 drops the axis shift
                const int64_t rs = R == 1 ? 0 : ((r - sg) % R + R) % R;
                for (int64_t p = 0; p < H * W; ++p) {
                    const int64_t src_p = gg.action.apply(ginv, static_cast<int>(p));
                    map[static_cast<size_t>((((b * C + c) * R + r) * H * W) + p)] =
                        ((b * C + c) * R + rs) * H * W + src_p;
                }
            }
    return map;
}

Tensor act(const GridGroup& gg, int element, const Tensor& feature) {
    const auto map = act_index_map(gg, element, feature.shape());
    Tensor out(feature.shape());
    for (int64_t i = 0; i < out.size(); ++i) out.flat(i) = feature.flat(map[static_cast<size_t>(i)]);
    return out;
}

}  // namespace symmetria
