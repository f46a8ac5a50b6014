#include "symmetria/layers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "symmetria/rng.hpp"

namespace symmetria {

namespace {

int64_t mod(int64_t a, int64_t m) { return ((a % m) + m) % m; }

void require(bool ok, const std::string& msg) {
    if (!ok) throw LayerError(msg);
}

}  // namespace

std::string branch_kind_name(BranchKind k) {
    switch (k) {
        case BranchKind::FC: return "FC";
        case BranchKind::FFC: return "FFC";
        case BranchKind::SFC: return "SFC";
        case BranchKind::CONV: return "CONV";
        case BranchKind::SCONV: return "SCONV";
        case BranchKind::GCONV: return "GCONV";
        case BranchKind::PGCONV: return "PGCONV";
    }
    throw LayerError("unknown branch kind");
}

BranchKind branch_kind_from(const std::string& s) {
    std::string t;
    for (char c : s) t.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (t == "FC") return BranchKind::FC;
    if (t == "FFC" || t == "F-FC") return BranchKind::FFC;
    if (t == "SFC" || t == "S-FC") return BranchKind::SFC;
    if (t == "CONV") return BranchKind::CONV;
    if (t == "SCONV" || t == "S-CONV") return BranchKind::SCONV;
    if (t == "GCONV") return BranchKind::GCONV;
    if (t == "PGCONV") return BranchKind::PGCONV;
    throw LayerError("unknown branch kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// direct-forward ops
// ---------------------------------------------------------------------------

Tensor fc_forward(const Tensor& theta, const Tensor& x) {
    require(x.rank() == 4, "fc_forward: x must be B x C x H x W");
    require(theta.rank() == 6, "fc_forward: theta must be C' x C x H x W x H x W");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = theta.dim(0);
    require(theta.dim(1) == C && theta.dim(2) == H && theta.dim(3) == W &&
                theta.dim(4) == H && theta.dim(5) == W,
            "fc_forward: theta/x extents disagree");
    Tensor y({B, Co, H, W});
    const int64_t P = H * W;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t po = 0; po < P; ++po) {
                double acc = 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    const double* th = theta.data() + ((co * C + c) * P + po) * P;
                    const double* xv = x.data() + (b * C + c) * P;
                    for (int64_t pi = 0; pi < P; ++pi) acc += th[pi] * xv[pi];
                }
                y.flat((b * Co + co) * P + po) = acc;
            }
    return y;
}

Tensor conv_forward(const Tensor& w, const Tensor& x) {
    require(x.rank() == 4, "conv_forward: x must be B x C x H x W");
    require(w.rank() == 4, "conv_forward: w must be C' x C x S x S");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(0), S = w.dim(2);
    require(w.dim(1) == C && w.dim(3) == S, "conv_forward: weight extents disagree");
    require(S % 2 == 1, "conv_forward: filter size must be odd");
    const int64_t h = (S - 1) / 2;
    Tensor y({B, Co, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double acc = 0.0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t du = -h; du <= h; ++du)
                            for (int64_t dv = -h; dv <= h; ++dv)
                                acc += w.flat(((co * C + c) * S + (du + h)) * S + (dv + h)) *
                                       x.flat(((b * C + c) * H + mod(i - du, H)) * W + mod(j - dv, W));
                    y.flat(((b * Co + co) * H + i) * W + j) = acc;
                }
    return y;
}

Tensor ffc_forward(const Tensor& t1, const Tensor& t2, const Tensor& x) {
    require(x.rank() == 4, "ffc_forward: x must be B x C x H x W");
    require(t1.rank() == 4 && t2.rank() == 4, "ffc_forward: factors must be C' x C x H x W");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = t1.dim(0), P = H * W;
    require(t1.dim(1) == C && t1.dim(2) == H && t1.dim(3) == W, "ffc_forward: t1 extents disagree");
    require(t2.same_shape(t1), "ffc_forward: factor shapes disagree");
    Tensor y({B, Co, H, W});
    std::vector<double> x1(static_cast<size_t>(C));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Co; ++co) {
            for (int64_t c = 0; c < C; ++c) {
                double acc = 0.0;
                const double* f2 = t2.data() + (co * C + c) * P;
                const double* xv = x.data() + (b * C + c) * P;
                for (int64_t p = 0; p < P; ++p) acc += f2[p] * xv[p];
                x1[static_cast<size_t>(c)] = acc;
            }
            for (int64_t po = 0; po < P; ++po) {
                double acc = 0.0;
                for (int64_t c = 0; c < C; ++c) acc += t1.flat((co * C + c) * P + po) * x1[static_cast<size_t>(c)];
                y.flat((b * Co + co) * P + po) = acc;
            }
        }
    return y;
}

std::vector<std::array<double, 2>> offset_domain(int S) {
    require(S % 2 == 1, "offset_domain: filter size must be odd");
    const int h = (S - 1) / 2;
    std::vector<std::array<double, 2>> d;
    d.reserve(static_cast<size_t>(S) * S);
    for (int u = -h; u <= h; ++u)
        for (int v = -h; v <= h; ++v) d.push_back({static_cast<double>(u), static_cast<double>(v)});
    return d;
}

std::vector<std::array<double, 2>> grid_domain(int H, int W) {
    std::vector<std::array<double, 2>> d;
    d.reserve(static_cast<size_t>(H) * W);
    for (int x = 0; x < H; ++x)
        for (int y = 0; y < W; ++y) d.push_back({static_cast<double>(x), static_cast<double>(y)});
    return d;
}

Tensor materialize_filter(const Tensor& u, const Tensor& z, double omega,
                          const std::vector<std::array<double, 2>>& domain) {
    require(u.rank() == 3, "materialize_filter: u must be C' x C x M");
    require(z.rank() == 2 && z.dim(1) == 2 && z.dim(0) == u.dim(2),
            "materialize_filter: z must be M x 2 and match u");
    const int64_t Co = u.dim(0), C = u.dim(1), M = u.dim(2);
    const int64_t P = static_cast<int64_t>(domain.size());
    Tensor out({Co, C, P});
    const double w2 = omega * omega;
    std::vector<double> phi(static_cast<size_t>(P * M));
    for (int64_t p = 0; p < P; ++p)
        for (int64_t j = 0; j < M; ++j) {
            const double dx = domain[static_cast<size_t>(p)][0] - z.flat(j * 2);
            const double dy = domain[static_cast<size_t>(p)][1] - z.flat(j * 2 + 1);
            phi[static_cast<size_t>(p * M + j)] = std::exp(-w2 * (dx * dx + dy * dy));
        }
    for (int64_t co = 0; co < Co; ++co)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t p = 0; p < P; ++p) {
                double acc = 0.0;
                for (int64_t j = 0; j < M; ++j)
                    acc += u.flat((co * C + c) * M + j) * phi[static_cast<size_t>(p * M + j)];
                out.flat((co * C + c) * P + p) = acc;
            }
    return out;
}

Tensor sconv_forward(const Tensor& u, const Tensor& z, double omega, int S, const Tensor& x) {
    Tensor w = materialize_filter(u, z, omega, offset_domain(S));
    return conv_forward(w.reshaped({u.dim(0), u.dim(1), S, S}), x);
}

Tensor sfc_forward(const Tensor& u1, const Tensor& z1, double omega1,
                   const Tensor& u2, const Tensor& z2, double omega2, const Tensor& x) {
    require(x.rank() == 4, "sfc_forward: x must be B x C x H x W");
    const int64_t H = x.dim(2), W = x.dim(3);
    const auto dom = grid_domain(static_cast<int>(H), static_cast<int>(W));
    Tensor s1 = materialize_filter(u1, z1, omega1, dom);
    Tensor s2 = materialize_filter(u2, z2, omega2, dom);
    return ffc_forward(s1.reshaped({u1.dim(0), u1.dim(1), H, W}),
                       s2.reshaped({u2.dim(0), u2.dim(1), H, W}), x);
}

Tensor gconv_forward(const Tensor& w, const Tensor& x, const GridGroup& p4) {
    require(p4.rotation_order == 4, "gconv_forward: group must be p4");
    require(w.rank() == 5, "gconv_forward: w must be C' x C x R_in x S x S");
    require(x.rank() == 5, "gconv_forward: x must be B x C x R_in x H x W");
    const int64_t B = x.dim(0), C = x.dim(1), Rin = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t Co = w.dim(0), S = w.dim(3);
    require(w.dim(1) == C && w.dim(2) == Rin && w.dim(4) == S, "gconv_forward: weight extents disagree");
    require(Rin == 1 || Rin == 4, "gconv_forward: R_in must be 1 or 4");
    require(H == p4.H && W == p4.W, "gconv_forward: grid size mismatch");
    require(S % 2 == 1, "gconv_forward: filter size must be odd");
    const int64_t h = (S - 1) / 2;
    const int64_t R = 4, P = H * W;
    Tensor y({B, Co, R, H, W});
    for (int s = 0; s < R; ++s)
        for (int qx = 0; qx < H; ++qx)
            for (int qy = 0; qy < W; ++qy) {
                const int he = p4.slot_to_element(s, qx, qy);
                const int64_t t = (s * H + qx) * W + qy;
                for (int64_t m = 0; m < Rin; ++m)
                    for (int64_t du = -h; du <= h; ++du)
                        for (int64_t dv = -h; dv <= h; ++dv) {
                            int64_t sr, src;
                            if (Rin == 1) {
                                sr = 0;
                                src = p4.action.apply(he, static_cast<int>(mod(du, H) * W + mod(dv, W)));
                            } else {
                                const int ue = p4.slot_to_element(static_cast<int>(m),
                                                                  static_cast<int>(mod(du, H)),
                                                                  static_cast<int>(mod(dv, W)));
                                int ss, sx, sy;
                                p4.element_to_slot(p4.group.compose(he, p4.group.inverse(ue)), ss, sx, sy);
                                sr = ss;
                                src = static_cast<int64_t>(sx) * W + sy;
                            }
                            const int64_t woff = (m * S + (du + h)) * S + (dv + h);
                            for (int64_t b = 0; b < B; ++b)
                                for (int64_t co = 0; co < Co; ++co) {
                                    double acc = 0.0;
                                    for (int64_t c = 0; c < C; ++c)
                                        acc += w.flat(((co * C + c) * Rin) * S * S + woff) *
                                               x.flat(((b * C + c) * Rin + sr) * P + src);
                                    y.flat(((b * Co + co) * R) * P + t) += acc;
                                }
                        }
            }
    return y;
}

Tensor pgconv_forward(const Tensor& w, const Tensor& x, const GridGroup& p4) {
    require(p4.rotation_order == 4, "pgconv_forward: group must be p4");
    require(w.rank() == 4, "pgconv_forward: w must be C' x C x S x S");
    require(x.rank() == 5, "pgconv_forward: x must be B x C x R x H x W");
    const int64_t B = x.dim(0), C = x.dim(1), R = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t Co = w.dim(0), S = w.dim(2);
    require(R == 4 && H == p4.H && W == p4.W, "pgconv_forward: feature map does not match group");
    require(S % 2 == 1, "pgconv_forward: filter size must be odd");
    const int64_t h = (S - 1) / 2;
    Tensor y({B, Co, R, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t s = 0; s < R; ++s)
                for (int64_t i = 0; i < H; ++i)
                    for (int64_t j = 0; j < W; ++j) {
                        double acc = 0.0;
                        for (int64_t c = 0; c < C; ++c)
                            for (int64_t du = -h; du <= h; ++du)
                                for (int64_t dv = -h; dv <= h; ++dv) {
                                    int ra, rb;
                                    rotate_offset(static_cast<int>(s), static_cast<int>(du),
                                                  static_cast<int>(dv), ra, rb);
                                    acc += w.flat(((co * C + c) * S + (du + h)) * S + (dv + h)) *
                                           x.flat((((b * C + c) * R + s) * H + mod(i - ra, H)) * W +
                                                  mod(j - rb, W));
                                }
                        y.flat((((b * Co + co) * R + s) * H + i) * W + j) = acc;
                    }
    return y;
}

Tensor polyphase_pool(const Tensor& x, bool* tie, int* component) {
    Tensor in = x;
    if (in.rank() == 4) in = in.reshaped({x.dim(0), x.dim(1), 1, x.dim(2), x.dim(3)});
    require(in.rank() == 5, "polyphase_pool: x must be B x C x (R x) H x W");
    const int64_t B = in.dim(0), C = in.dim(1), R = in.dim(2), H = in.dim(3), W = in.dim(4);
    require(H % 2 == 0 && W % 2 == 0, "polyphase_pool: spatial dims must be even");
    Tensor out({B, C, R, H / 2, W / 2});
    if (tie) *tie = false;
    for (int64_t b = 0; b < B; ++b) {
        double best = -1.0;
        int64_t comp = 0;
        for (int64_t k = 0; k < 4; ++k) {
            const int64_t oi = k / 2, oj = k % 2;
            double norm = 0.0;
            for (int64_t c = 0; c < C; ++c)
                for (int64_t r = 0; r < R; ++r)
                    for (int64_t i = oi; i < H; i += 2)
                        for (int64_t j = oj; j < W; j += 2)
                            norm = std::max(norm, std::abs(in.flat((((b * C + c) * R + r) * H + i) * W + j)));
            if (k == 0 || norm > best) {
                best = norm;
                comp = k;
            } else if (norm == best && tie) {
                *tie = true;
            }
        }
        if (component && b == 0) *component = static_cast<int>(comp);
        const int64_t oi = comp / 2, oj = comp % 2;
        for (int64_t c = 0; c < C; ++c)
            for (int64_t r = 0; r < R; ++r)
                for (int64_t i = 0; i < H / 2; ++i)
                    for (int64_t j = 0; j < W / 2; ++j)
                        out.flat((((b * C + c) * R + r) * (H / 2) + i) * (W / 2) + j) =
                            in.flat((((b * C + c) * R + r) * H + (2 * i + oi)) * W + (2 * j + oj));
    }
    if (x.rank() == 4) return out.reshaped({B, C, H / 2, W / 2});
    return out;
}

// ---------------------------------------------------------------------------
// patch index maps
// ---------------------------------------------------------------------------

std::vector<int64_t> conv_patch_map(int64_t B, int64_t C, int64_t R, int64_t H, int64_t W, int S) {
    const int64_t h = (S - 1) / 2;
    const int64_t D = C * R * S * S, T = H * W;
    std::vector<int64_t> map(static_cast<size_t>(B * T * D));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t r = 0; r < R; ++r)
                        for (int64_t du = -h; du <= h; ++du)
                            for (int64_t dv = -h; dv <= h; ++dv)
                                map[pos++] = (((b * C + c) * R + r) * H + mod(i - du, H)) * W + mod(j - dv, W);
    return map;
}

std::vector<int64_t> gconv_patch_map(const GridGroup& p4, int64_t B, int64_t C, int64_t R_in, int S) {
    require(p4.rotation_order == 4, "gconv_patch_map: group must be p4");
    const int64_t H = p4.H, W = p4.W, h = (S - 1) / 2, P = H * W;
    const int64_t D = C * R_in * S * S, T = 4 * P;
    std::vector<int64_t> map(static_cast<size_t>(B * T * D));
    // per-slot source table, reused across batch and channels
    std::vector<int64_t> src_r(static_cast<size_t>(T * R_in * S * S)), src_p(src_r.size());
    size_t q = 0;
    for (int s = 0; s < 4; ++s)
        for (int qx = 0; qx < static_cast<int>(H); ++qx)
            for (int qy = 0; qy < static_cast<int>(W); ++qy) {
                const int he = p4.slot_to_element(s, qx, qy);
                for (int64_t m = 0; m < R_in; ++m)
                    for (int64_t du = -h; du <= h; ++du)
                        for (int64_t dv = -h; dv <= h; ++dv, ++q) {
                            if (R_in == 1) {
                                src_r[q] = 0;
                                src_p[q] = p4.action.apply(he, static_cast<int>(mod(du, H) * W + mod(dv, W)));
                            } else {
                                const int ue = p4.slot_to_element(static_cast<int>(m),
                                                                  static_cast<int>(mod(du, H)),
                                                                  static_cast<int>(mod(dv, W)));
                                int ss, sx, sy;
                                p4.element_to_slot(p4.group.compose(he, p4.group.inverse(ue)), ss, sx, sy);
                                src_r[q] = ss;
                                src_p[q] = static_cast<int64_t>(sx) * W + sy;
                            }
                        }
            }
    size_t pos = 0;
    const int64_t F = R_in * S * S;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t f = 0; f < F; ++f) {
                    const size_t k = static_cast<size_t>(t * F + f);
                    map[pos++] = ((b * C + c) * R_in + src_r[k]) * P + src_p[k];
                }
    return map;
}

std::vector<int64_t> pgconv_patch_map(const GridGroup& p4, int64_t B, int64_t C, int S) {
    require(p4.rotation_order == 4, "pgconv_patch_map: group must be p4");
    const int64_t H = p4.H, W = p4.W, h = (S - 1) / 2, P = H * W;
    const int64_t T = 4 * P, F = static_cast<int64_t>(S) * S;
    std::vector<int64_t> src(static_cast<size_t>(T * F));
    size_t q = 0;
    for (int s = 0; s < 4; ++s)
        for (int qx = 0; qx < static_cast<int>(H); ++qx)
            for (int qy = 0; qy < static_cast<int>(W); ++qy) {
                const int he = p4.slot_to_element(s, qx, qy);
                for (int64_t du = -h; du <= h; ++du)
                    for (int64_t dv = -h; dv <= h; ++dv, ++q) {
                        const int ue = p4.slot_to_element(0, static_cast<int>(mod(du, H)),
                                                          static_cast<int>(mod(dv, W)));
                        int ss, sx, sy;
                        p4.element_to_slot(p4.group.compose(he, p4.group.inverse(ue)), ss, sx, sy);
                        require(ss == s, "pgconv_patch_map: slice leak");
                        src[q] = (static_cast<int64_t>(ss) * H + sx) * W + sy;
                    }
            }
    std::vector<int64_t> map(static_cast<size_t>(B * T * C * F));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t f = 0; f < F; ++f) {
                    const int64_t sp = src[static_cast<size_t>(t * F + f)];
                    map[pos++] = (b * C + c) * 4 * P + sp;
                }
    return map;
}

// ---------------------------------------------------------------------------
// parameter bookkeeping
// ---------------------------------------------------------------------------

int64_t BranchSpec::param_count() const {
    const int64_t Co = static_cast<int64_t>(C_out) * R, Ci = static_cast<int64_t>(C_in) * R;
    const int64_t P = static_cast<int64_t>(H) * W, SS = static_cast<int64_t>(S) * S;
    switch (kind) {
        case BranchKind::FC: return Co * Ci * P * P;
        case BranchKind::FFC: return 2 * Co * Ci * P;
        case BranchKind::SFC:
            return Co * Ci * (M1 + M2) + (trainable_locations ? 2LL * (M1 + M2) : 0) + 2;
        case BranchKind::CONV: return Co * Ci * SS;
        case BranchKind::SCONV: return Co * Ci * M1 + (trainable_locations ? 2LL * M1 : 0) + 1;
        case BranchKind::GCONV: return static_cast<int64_t>(C_out) * C_in * R * SS;
        case BranchKind::PGCONV: return static_cast<int64_t>(C_out) * C_in * SS;
    }
    throw LayerError("unknown branch kind");
}

std::string Network::param_name(int layer, int branch, const std::string& tensor) const {
    const auto& sp = layers.at(static_cast<size_t>(layer)).branches.at(static_cast<size_t>(branch));
    return "L" + std::to_string(layer) + "." + branch_kind_name(sp.kind) + "." + tensor;
}

std::vector<TensorPlan> branch_tensors(const BranchSpec& sp) {
    const int64_t Co = static_cast<int64_t>(sp.C_out) * sp.R, Ci = static_cast<int64_t>(sp.C_in) * sp.R;
    const int64_t H = sp.H, W = sp.W, S = sp.S;
    switch (sp.kind) {
        case BranchKind::FC: return {{"w", {Co, Ci, H, W, H, W}}};
        case BranchKind::FFC: return {{"t1", {Co, Ci, H, W}}, {"t2", {Co, Ci, H, W}}};
        case BranchKind::SFC:
            return {{"u1", {Co, Ci, sp.M1}}, {"z1", {sp.M1, 2}, sp.trainable_locations}, {"omega1", {1}},
                    {"u2", {Co, Ci, sp.M2}}, {"z2", {sp.M2, 2}, sp.trainable_locations}, {"omega2", {1}}};
        case BranchKind::CONV: return {{"w", {Co, Ci, S, S}}};
        case BranchKind::SCONV:
            return {{"u", {Co, Ci, sp.M1}}, {"z", {sp.M1, 2}, sp.trainable_locations}, {"omega", {1}}};
        case BranchKind::GCONV: return {{"w", {sp.C_out, sp.C_in, sp.R, S, S}}};
        case BranchKind::PGCONV: return {{"w", {sp.C_out, sp.C_in, S, S}}};
    }
    throw LayerError("unknown branch kind");
}

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// anchor initialisation: near-uniform lattice over the domain bounding box
void init_anchors(Tensor& z, double lo, double hi, Rng& rng) {
    const int64_t M = z.dim(0);
    const int64_t side = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(M))));
    const double step = (hi - lo) / static_cast<double>(side);
    for (int64_t j = 0; j < M; ++j) {
        const int64_t gx = j / side, gy = j % side;
        z.flat(j * 2) = lo + (static_cast<double>(gx) + 0.5) * step + 0.1 * rng.normal();
        z.flat(j * 2 + 1) = lo + (static_cast<double>(gy) + 0.5) * step + 0.1 * rng.normal();
    }
}

double weight_sigma(const BranchSpec& sp, const std::string& tensor) {
    const double Ci = static_cast<double>(sp.C_in) * sp.R;
    const double P = static_cast<double>(sp.H) * sp.W, SS = static_cast<double>(sp.S) * sp.S;
    switch (sp.kind) {
        case BranchKind::FC: return 1.0 / std::sqrt(Ci * P);
        case BranchKind::FFC: return tensor == "t2" ? 1.0 / std::sqrt(P) : 1.0 / std::sqrt(Ci);
        case BranchKind::SFC: return tensor == "u2" ? 1.0 / std::sqrt(P) : 1.0 / std::sqrt(Ci);
        case BranchKind::CONV: return 1.0 / std::sqrt(Ci * SS);
        case BranchKind::SCONV: return 1.0 / std::sqrt(Ci * SS);
        case BranchKind::GCONV: return 1.0 / std::sqrt(static_cast<double>(sp.C_in) * sp.R * SS);
        case BranchKind::PGCONV: return 1.0 / std::sqrt(static_cast<double>(sp.C_in) * SS);
    }
    return 1.0;
}

}  // namespace

void Network::init_params(uint64_t seed) {
    params.clear();
    for (size_t li = 0; li < layers.size(); ++li)
        for (size_t bi = 0; bi < layers[li].branches.size(); ++bi) {
            const BranchSpec& sp = layers[li].branches[bi];
            for (const TensorPlan& tp : branch_tensors(sp)) {
                const std::string name = param_name(static_cast<int>(li), static_cast<int>(bi), tp.tensor);
                Rng rng = Rng::substream(seed, fnv1a(name));
                Tensor t(tp.shape);
                if (tp.tensor == "omega" || tp.tensor == "omega1" || tp.tensor == "omega2") {
                    t.fill(1.0);
                } else if (tp.tensor[0] == 'z') {
                    if (sp.kind == BranchKind::SCONV)
                        init_anchors(t, -0.5 * (sp.S - 1), 0.5 * (sp.S - 1), rng);
                    else
                        init_anchors(t, 0.0, static_cast<double>(sp.H - 1), rng);
                } else {
                    const double sg = weight_sigma(sp, tp.tensor);
                    for (int64_t i = 0; i < t.size(); ++i) t.flat(i) = sg * rng.normal();
                }
                params.emplace(name, std::move(t));
            }
        }
}

int64_t Network::param_count() const {
    int64_t n = 0;
    for (size_t li = 0; li < layers.size(); ++li)
        for (size_t bi = 0; bi < layers[li].branches.size(); ++bi)
            for (const TensorPlan& tp : branch_tensors(layers[li].branches[bi]))
                if (tp.trainable)
                    n += numel(tp.shape);
    return n;
}

const GridGroup& Network::p4_at(int spatial_size) const {
    auto it = p4_cache_.find(spatial_size);
    if (it == p4_cache_.end())
        it = p4_cache_.emplace(spatial_size, std::make_shared<GridGroup>(build_p4(spatial_size, spatial_size))).first;
    return *it->second;
}

namespace {

// RBF design-matrix subgraph; returns {filter (Co,Ci,|domain|), phi (|domain|,M)}
std::pair<int, int> build_materialize(Graph& g, int u, int z, int om,
                                      const std::vector<std::array<double, 2>>& domain, int64_t M) {
    const int64_t P = static_cast<int64_t>(domain.size());
    Tensor coords({P, 2});
    for (int64_t p = 0; p < P; ++p) {
        coords.flat(p * 2) = domain[static_cast<size_t>(p)][0];
        coords.flat(p * 2 + 1) = domain[static_cast<size_t>(p)][1];
    }
    const int cn = g.constant(std::move(coords));
    std::vector<int64_t> ci(static_cast<size_t>(P * M * 2)), zi(ci.size());
    for (int64_t p = 0; p < P; ++p)
        for (int64_t j = 0; j < M; ++j)
            for (int64_t k = 0; k < 2; ++k) {
                ci[static_cast<size_t>((p * M + j) * 2 + k)] = p * 2 + k;
                zi[static_cast<size_t>((p * M + j) * 2 + k)] = j * 2 + k;
            }
    const int cb = g.gather(cn, std::move(ci), {P, M, 2});
    const int zb = g.gather(z, std::move(zi), {P, M, 2});
    const int d2 = g.sum(g.square(g.sub(cb, zb)), {2});        // (P, M)
    const int nom2 = g.scale(g.square(om), -1.0);
    const int phi = g.exp_(g.scale_by(d2, nom2));              // (P, M)
    const int filt = g.contract(u, phi, {{2, 1}});             // (Co, Ci, P)
    return {filt, phi};
}

struct Builder {
    const Network& net;
    Graph& g;
    int B;

    int leaf(const std::string& name, bool trainable = true) {
        return g.leaf(name, &net.params.at(name), trainable);
    }

    // apply a (Co_eff x D) weight-matrix node to conv-style patches
    int apply_patches(int patches, int wm, const BranchSpec& sp, int64_t T) {
        const int y = g.contract(patches, wm, {{2, 1}});       // (B, T, Co_eff)
        const int yp = g.permute(y, {0, 2, 1});                // (B, Co_eff, T)
        (void)T;
        return g.reshape(yp, {B, sp.C_out, sp.R, sp.H, sp.W});
    }

    BranchTap build(int x, const BranchSpec& sp, int layer, int branch) {
        BranchTap tap;
        tap.kind = sp.kind;
        const int64_t Ci = static_cast<int64_t>(sp.C_in) * sp.R;
        const int64_t Co = static_cast<int64_t>(sp.C_out) * sp.R;
        const int64_t H = sp.H, W = sp.W, P = H * W;
        auto pname = [&](const char* t) { return net.param_name(layer, branch, t); };

        switch (sp.kind) {
            case BranchKind::FC: {
                const int w = leaf(pname("w"));
                tap.params = {pname("w")};
                const int xf = g.reshape(x, {B, Ci * P});
                const int wm = g.reshape(g.permute(w, {0, 2, 3, 1, 4, 5}), {Co * P, Ci * P});
                tap.patches = xf;
                tap.weight = wm;
                tap.out = g.reshape(g.contract(xf, wm, {{1, 1}}), {B, sp.C_out, sp.R, H, W});
                break;
            }
            case BranchKind::FFC: {
                const int t1 = leaf(pname("t1"));
                const int t2 = leaf(pname("t2"));
                tap.params = {pname("t1"), pname("t2")};
                const int xf = g.reshape(x, {B, Ci, H, W});
                const int x1c = g.contract(xf, t2, {{2, 2}, {3, 3}}, {{1, 1}});  // (Ci, B, Co)
                tap.x1 = g.permute(x1c, {1, 2, 0});                               // (B, Co, Ci)
                const int y = g.contract(tap.x1, t1, {{2, 1}}, {{1, 0}});         // (Co, B, H, W)
                tap.out = g.reshape(g.permute(y, {1, 0, 2, 3}), {B, sp.C_out, sp.R, H, W});
                break;
            }
            case BranchKind::SFC: {
                const int u1 = leaf(pname("u1"));
                const int z1 = leaf(pname("z1"), sp.trainable_locations);
                const int o1 = leaf(pname("omega1"));
                const int u2 = leaf(pname("u2"));
                const int z2 = leaf(pname("z2"), sp.trainable_locations);
                const int o2 = leaf(pname("omega2"));
                tap.params = {pname("u1"), pname("z1"), pname("omega1"),
                              pname("u2"), pname("z2"), pname("omega2")};
                const auto dom = grid_domain(sp.H, sp.W);
                auto [f1, phi1] = build_materialize(g, u1, z1, o1, dom, sp.M1);
                auto [f2, phi2] = build_materialize(g, u2, z2, o2, dom, sp.M2);
                tap.phi1 = phi1;
                tap.phi2 = phi2;
                const int s1 = g.reshape(f1, {Co, Ci, H, W});
                const int s2 = g.reshape(f2, {Co, Ci, H, W});
                const int xf = g.reshape(x, {B, Ci, H, W});
                const int x1c = g.contract(xf, s2, {{2, 2}, {3, 3}}, {{1, 1}});
                tap.x1 = g.permute(x1c, {1, 2, 0});
                const int y = g.contract(tap.x1, s1, {{2, 1}}, {{1, 0}});
                tap.out = g.reshape(g.permute(y, {1, 0, 2, 3}), {B, sp.C_out, sp.R, H, W});
                break;
            }
            case BranchKind::CONV: {
                const int w = leaf(pname("w"));
                tap.params = {pname("w")};
                const int64_t D = Ci * sp.S * sp.S;
                tap.patches = g.gather(x, conv_patch_map(B, sp.C_in, sp.R, H, W, sp.S), {B, P, D});
                tap.weight = g.reshape(w, {Co, D});
                tap.out = apply_patches(tap.patches, tap.weight, sp, P);
                break;
            }
            case BranchKind::SCONV: {
                const int u = leaf(pname("u"));
                const int z = leaf(pname("z"), sp.trainable_locations);
                const int om = leaf(pname("omega"));
                tap.params = {pname("u"), pname("z"), pname("omega")};
                auto [filt, phi] = build_materialize(g, u, z, om, offset_domain(sp.S), sp.M1);
                tap.phi1 = phi;
                const int64_t D = Ci * sp.S * sp.S;
                tap.weight = g.reshape(filt, {Co, D});
                tap.patches = g.gather(x, conv_patch_map(B, sp.C_in, sp.R, H, W, sp.S), {B, P, D});
                tap.out = apply_patches(tap.patches, tap.weight, sp, P);
                break;
            }
            case BranchKind::GCONV: {
                const int w = leaf(pname("w"));
                tap.params = {pname("w")};
                const GridGroup& p4 = net.p4_at(sp.H);
                const int64_t D = static_cast<int64_t>(sp.C_in) * sp.R * sp.S * sp.S;
                const int64_t T = static_cast<int64_t>(sp.R) * P;
                tap.patches = g.gather(x, gconv_patch_map(p4, B, sp.C_in, sp.R, sp.S), {B, T, D});
                tap.weight = g.reshape(w, {static_cast<int64_t>(sp.C_out), D});
                const int y = g.contract(tap.patches, tap.weight, {{2, 1}});  // (B, T, C_out)
                tap.out = g.reshape(g.permute(y, {0, 2, 1}), {B, sp.C_out, sp.R, H, W});
                break;
            }
            case BranchKind::PGCONV: {
                const int w = leaf(pname("w"));
                tap.params = {pname("w")};
                const GridGroup& p4 = net.p4_at(sp.H);
                const int64_t D = static_cast<int64_t>(sp.C_in) * sp.S * sp.S;
                const int64_t T = static_cast<int64_t>(sp.R) * P;
                tap.patches = g.gather(x, pgconv_patch_map(p4, B, sp.C_in, sp.S), {B, T, D});
                tap.weight = g.reshape(w, {static_cast<int64_t>(sp.C_out), D});
                const int y = g.contract(tap.patches, tap.weight, {{2, 1}});
                tap.out = g.reshape(g.permute(y, {0, 2, 1}), {B, sp.C_out, sp.R, H, W});
                break;
            }
        }
        return tap;
    }
};

}  // namespace

BuiltNet Network::build(int batch) const {
    BuiltNet bn;
    bn.batch = batch;
    Graph& g = bn.g;
    const int64_t B = batch;
    bn.input = g.input("images", {B, in_channels, 1, spatial, spatial});
    int x = bn.input;
    if (R == 4) {
        // exact trivial lift: replicate over the rotation axis
        const int64_t C = in_channels, P = static_cast<int64_t>(spatial) * spatial;
        std::vector<int64_t> rep(static_cast<size_t>(B * C * 4 * P));
        size_t pos = 0;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t r = 0; r < 4; ++r)
                    for (int64_t p = 0; p < P; ++p) rep[pos++] = (b * C + c) * P + p;
        x = g.gather(bn.input, std::move(rep), {B, C, 4, spatial, spatial});
    }
    Builder bld{*this, g, batch};
    bool pooled_global = false;
    for (size_t li = 0; li < layers.size(); ++li) {
        const LayerInfo& L = layers[li];
        if (L.head && !pooled_global) {
            // global average over rotation axis and space
            const Shape& s = g.node(x).shape;
            const double inv = 1.0 / static_cast<double>(s[2] * s[3] * s[4]);
            x = g.reshape(g.scale(g.sum(x, {2, 3, 4}), inv), {B, s[1], 1, 1, 1});
            pooled_global = true;
        }
        LayerTap tap;
        tap.in = x;
        int acc = -1;
        for (size_t bi = 0; bi < L.branches.size(); ++bi) {
            BranchTap bt = bld.build(x, L.branches[bi], static_cast<int>(li), static_cast<int>(bi));
            acc = acc < 0 ? bt.out : g.add(acc, bt.out);
            tap.branches.push_back(std::move(bt));
        }
        tap.out = acc;
        x = L.relu ? g.relu(acc) : acc;
        if (L.pool) x = g.polyphase_pool(x);
        bn.layers.push_back(std::move(tap));
    }
    bn.logits = g.reshape(x, {B, classes});
    bn.onehot = g.input("labels_onehot", {B, classes});
    const int picked = g.mul(g.log_softmax(bn.logits), bn.onehot);
    bn.nll_sum = g.scale(g.sum(picked, {0, 1}), -1.0);
    return bn;
}

Tensor Network::logits_for(const Tensor& images) const {
    require(images.rank() == 4, "logits_for: images must be B x C x H x W");
    BuiltNet bn = build(static_cast<int>(images.dim(0)));
    bn.g.set_input(bn.input, images.reshaped({images.dim(0), images.dim(1), 1, images.dim(2), images.dim(3)}));
    bn.g.forward();
    return bn.g.value(bn.logits);
}

// ---------------------------------------------------------------------------
// architecture builder
// ---------------------------------------------------------------------------

namespace {

struct StageDef {
    int c_in, c_out, spatial;
    bool pool;
    int filter;  // 0 = use configured filter size
};

std::vector<StageDef> pathway_stages(int spatial, int alpha) {
    require(spatial >= 3, "build_architecture: spatial size too small");
    std::vector<StageDef> st;
    st.push_back({0, alpha, spatial, false, 0});  // c_in patched by caller
    int c = alpha, s = spatial, pools = 0;
    while (s % 2 == 0 && s > 1) {
        ++pools;
        const int factor = (pools <= 3 || s / 2 == 1) ? 2 : 1;
        st.push_back({c, factor * c, s, true, 0});
        c *= factor;
        s /= 2;
        if (s >= 6 && s % 2 == 0) st.push_back({c, c, s, false, 0});
    }
    if (s > 1) st.push_back({c, c, s, false, s});  // odd remainder: full-support stage
    return st;
}

}  // namespace

int pathway_layer_count(int spatial) {
    return static_cast<int>(pathway_stages(spatial, 1).size());
}

Network build_architecture(const ArchConfig& cfg) {
    require(!cfg.menus.empty(), "build_architecture: at least one branch menu required");
    auto stages = pathway_stages(cfg.spatial, cfg.alpha);
    stages[0].c_in = cfg.in_channels;
    std::vector<std::vector<BranchKind>> menus = cfg.menus;
    if (menus.size() == 1) menus.assign(stages.size(), cfg.menus[0]);
    require(menus.size() == stages.size(),
            "build_architecture: expected " + std::to_string(stages.size()) + " branch menus, got " +
                std::to_string(menus.size()));

    int R = 1;
    for (const auto& menu : menus)
        for (BranchKind k : menu)
            if (k == BranchKind::GCONV || k == BranchKind::PGCONV) R = 4;

    Network net;
    net.in_channels = cfg.in_channels;
    net.spatial = cfg.spatial;
    net.classes = cfg.classes;
    net.R = R;

    for (size_t i = 0; i < stages.size(); ++i) {
        const StageDef& sd = stages[i];
        LayerInfo L;
        L.C_in = sd.c_in;
        L.C_out = sd.c_out;
        L.H = L.W = sd.spatial;
        L.R = R;
        L.relu = true;
        L.pool = sd.pool;
        require(!menus[i].empty(), "build_architecture: empty branch menu");
        for (BranchKind k : menus[i]) {
            BranchSpec sp;
            sp.kind = k;
            sp.C_in = sd.c_in;
            sp.C_out = sd.c_out;
            sp.H = sp.W = sd.spatial;
            sp.R = R;
            sp.S = sd.filter > 0 ? sd.filter : cfg.filter_size;
            sp.trainable_locations = cfg.trainable_locations;
            if (k == BranchKind::SCONV) sp.M1 = (sp.S * sp.S + 1) / 2;
            if (k == BranchKind::SFC) sp.M1 = sp.M2 = (sd.spatial * sd.spatial + 1) / 2;
            L.branches.push_back(sp);
        }
        net.layers.push_back(std::move(L));
    }

    // global average pool happens before the first head stage (see build)
    const int feat = stages.back().c_out;
    for (int hi = 0; hi < 2; ++hi) {
        LayerInfo L;
        L.C_in = hi == 0 ? feat : 4 * feat;
        L.C_out = hi == 0 ? 4 * feat : cfg.classes;
        L.H = L.W = 1;
        L.R = 1;
        L.relu = hi == 0;
        L.pool = false;
        L.head = true;
        BranchSpec sp;
        sp.kind = BranchKind::FC;
        sp.C_in = L.C_in;
        sp.C_out = L.C_out;
        sp.H = sp.W = 1;
        sp.R = 1;
        sp.S = 1;
        net.layers.push_back(std::move(L));
        net.layers.back().branches.push_back(sp);
    }
    return net;
}

}  // namespace symmetria
