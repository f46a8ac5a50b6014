#include "symmetria/curvature.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace symmetria {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Tensor loglik_hessian(const Tensor& probs_row) {
    const int64_t K = probs_row.size();
    Tensor lam({K, K});
    for (int64_t i = 0; i < K; ++i)
        for (int64_t j = 0; j < K; ++j) {
            const double pi = probs_row.flat(i), pj = probs_row.flat(j);
            lam.flat(i * K + j) = (i == j ? pi : 0.0) - pi * pj;
        }
    return lam;
}

void CurvatureBlock::d_g_of(int64_t flat, int64_t& d, int64_t& g) const {
    switch (layout) {
        case FactorLayout::DenseFC: {
            const int64_t p = flat % fcP;
            const int64_t rest = flat / fcP;
            const int64_t po = rest % fcP;
            const int64_t cc = rest / fcP;
            d = (cc % fcCi) * fcP + p;
            g = (cc / fcCi) * fcP + po;
            return;
        }
        case FactorLayout::OutLeading:
            g = flat / D;
            d = flat % D;
            return;
        case FactorLayout::InLeading:
            d = flat / G;
            g = flat % G;
            return;
    }
    throw CurvatureError("unknown factor layout");
}

Tensor expand_kronecker(const CurvatureBlock& blk) {
    const int64_t P = blk.D * blk.G;
    Tensor out({P, P});
    const double inv = blk.rows > 0 ? 1.0 / static_cast<double>(blk.rows) : 0.0;
    for (int64_t i = 0; i < P; ++i) {
        int64_t di, gi;
        blk.d_g_of(i, di, gi);
        for (int64_t j = 0; j < P; ++j) {
            int64_t dj, gj;
            blk.d_g_of(j, dj, gj);
            out.flat(i * P + j) = inv * blk.A.flat(di * blk.D + dj) * blk.B.flat(gi * blk.G + gj);
        }
    }
    return out;
}

Tensor project_columns(const Tensor& A, const Tensor& Phi, int64_t channels) {
    const int64_t Pd = Phi.dim(0), M = Phi.dim(1);
    if (A.dim(0) != channels * Pd || A.dim(1) != channels * Pd)
        throw CurvatureError("project_columns: factor/design shape mismatch");
    Tensor out({channels * M, channels * M});
    CMapMat Am(A.data(), A.dim(0), A.dim(1));
    CMapMat Pm(Phi.data(), Pd, M);
    MapMat Om(out.data(), out.dim(0), out.dim(1));
    for (int64_t ci = 0; ci < channels; ++ci)
        for (int64_t cj = 0; cj < channels; ++cj)
            Om.block(ci * M, cj * M, M, M).noalias() =
                Pm.transpose() * Am.block(ci * Pd, cj * Pd, Pd, Pd) * Pm;
    return out;
}

Tensor project_matrix(const Tensor& B, const Tensor& Phi) {
    const int64_t Pd = Phi.dim(0), M = Phi.dim(1);
    if (B.dim(0) != Pd || B.dim(1) != Pd) throw CurvatureError("project_matrix: shape mismatch");
    Tensor out({M, M});
    CMapMat Bm(B.data(), Pd, Pd);
    CMapMat Pm(Phi.data(), Pd, M);
    MapMat Om(out.data(), M, M);
    Om.noalias() = Pm.transpose() * Bm * Pm;
    return out;
}

namespace {

Tensor rows_slice(const Tensor& x, int64_t s, int64_t e) {
    Shape sh = x.shape();
    const int64_t stride = x.size() / sh[0];
    sh[0] = e - s;
    Tensor out(sh);
    for (int64_t i = 0; i < out.size(); ++i) out.flat(i) = x.flat(s * stride + i);
    return out;
}

std::vector<double> softmax_rows(const Tensor& logits) {
    const int64_t B = logits.dim(0), K = logits.dim(1);
    std::vector<double> p(static_cast<size_t>(B * K));
    for (int64_t n = 0; n < B; ++n) {
        double mx = logits.flat(n * K);
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, logits.flat(n * K + k));
        double z = 0;
        for (int64_t k = 0; k < K; ++k) z += std::exp(logits.flat(n * K + k) - mx);
        for (int64_t k = 0; k < K; ++k)
            p[static_cast<size_t>(n * K + k)] = std::exp(logits.flat(n * K + k) - mx) / z;
    }
    return p;
}

enum class Path { Dense, Conv, Group, FacIn, FacOut };

struct Work {
    CurvatureBlock blk;
    Path path;
    int64_t T = 1;         // positions per sample
    int64_t rawD = 0, rawG = 0;
    int64_t channels = 0;  // block-diagonal channel count (FacIn/FacOut, projections)
    bool project_in = false, project_out = false;
    int phi_slot = 0;      // 1 -> tap.phi1, 2 -> tap.phi2
    Tensor Phi;            // captured on the first chunk
};

std::vector<Work> plan_blocks(const Network& net) {
    std::vector<Work> ws;
    for (size_t li = 0; li < net.layers.size(); ++li)
        for (size_t bi = 0; bi < net.layers[li].branches.size(); ++bi) {
            const BranchSpec& sp = net.layers[li].branches[bi];
            const int64_t Ci = static_cast<int64_t>(sp.C_in) * sp.R;
            const int64_t Co = static_cast<int64_t>(sp.C_out) * sp.R;
            const int64_t P = static_cast<int64_t>(sp.H) * sp.W, SS = static_cast<int64_t>(sp.S) * sp.S;
            auto mk = [&](const char* tensor) {
                Work w;
                w.blk.param = net.param_name(static_cast<int>(li), static_cast<int>(bi), tensor);
                w.blk.layer = static_cast<int>(li);
                w.blk.branch = static_cast<int>(bi);
                w.blk.kind = sp.kind;
                return w;
            };
            switch (sp.kind) {
                case BranchKind::FC: {
                    Work w = mk("w");
                    w.path = Path::Dense;
                    w.T = 1;
                    w.rawD = Ci * P;
                    w.rawG = Co * P;
                    w.blk.layout = FactorLayout::DenseFC;
                    w.blk.D = w.rawD;
                    w.blk.G = w.rawG;
                    w.blk.fcP = P;
                    w.blk.fcCi = Ci;
                    ws.push_back(std::move(w));
                    break;
                }
                case BranchKind::CONV: {
                    Work w = mk("w");
                    w.path = Path::Conv;
                    w.T = P;
                    w.rawD = Ci * SS;
                    w.rawG = Co;
                    w.blk.layout = FactorLayout::OutLeading;
                    w.blk.D = w.rawD;
                    w.blk.G = w.rawG;
                    ws.push_back(std::move(w));
                    break;
                }
                case BranchKind::SCONV: {
                    Work w = mk("u");
                    w.path = Path::Conv;
                    w.T = P;
                    w.rawD = Ci * SS;
                    w.rawG = Co;
                    w.project_in = true;
                    w.phi_slot = 1;
                    w.channels = Ci;
                    w.blk.layout = FactorLayout::OutLeading;
                    w.blk.D = Ci * sp.M1;
                    w.blk.G = Co;
                    ws.push_back(std::move(w));
                    break;
                }
                case BranchKind::GCONV:
                case BranchKind::PGCONV: {
                    Work w = mk("w");
                    w.path = Path::Group;
                    w.T = static_cast<int64_t>(sp.R) * P;
                    w.rawD = sp.kind == BranchKind::GCONV
                                 ? static_cast<int64_t>(sp.C_in) * sp.R * SS
                                 : static_cast<int64_t>(sp.C_in) * SS;
                    w.rawG = sp.C_out;
                    w.blk.layout = FactorLayout::OutLeading;
                    w.blk.D = w.rawD;
                    w.blk.G = w.rawG;
                    ws.push_back(std::move(w));
                    break;
                }
                case BranchKind::FFC:
                case BranchKind::SFC: {
                    const bool rbf = sp.kind == BranchKind::SFC;
                    Work w2 = mk(rbf ? "u2" : "t2");  // input-side factor
                    w2.path = Path::FacIn;
                    w2.T = Ci;
                    w2.rawD = Ci * P;
                    w2.rawG = Co;
                    w2.channels = Ci;
                    w2.blk.layout = FactorLayout::OutLeading;
                    w2.blk.D = rbf ? Ci * sp.M2 : Ci * P;
                    w2.blk.G = Co;
                    if (rbf) {
                        w2.project_in = true;
                        w2.phi_slot = 2;
                    }
                    ws.push_back(std::move(w2));

                    Work w1 = mk(rbf ? "u1" : "t1");  // output-side factor
                    w1.path = Path::FacOut;
                    w1.T = Co;
                    w1.rawD = Co * Ci;
                    w1.rawG = P;
                    w1.channels = Co;
                    w1.blk.layout = FactorLayout::InLeading;
                    w1.blk.D = Co * Ci;
                    w1.blk.G = rbf ? sp.M1 : P;
                    if (rbf) {
                        w1.project_out = true;
                        w1.phi_slot = 1;
                    }
                    ws.push_back(std::move(w1));
                    break;
                }
            }
        }
    for (Work& w : ws) {
        w.blk.A = Tensor::zeros({w.rawD, w.rawD});
        w.blk.B = Tensor::zeros({w.rawG, w.rawG});
    }
    return ws;
}

// stack columns g * sqrt(p) (all classes) and g * p (summed) for the Lambda
// split  sum_k p_k g g^T - (g p)(g p)^T, then two rank-size GEMMs per chunk
struct GStacker {
    int64_t Gd, K;
    std::vector<double> s1, s2;
    int64_t n1 = 0, n2 = 0;

    void reset(int64_t gd, int64_t k, int64_t cols) {
        Gd = gd;
        K = k;
        s1.assign(static_cast<size_t>(gd * cols * k), 0.0);
        s2.assign(static_cast<size_t>(gd * cols), 0.0);
        n1 = cols * k;
        n2 = cols;
    }
    // gvec: pointer walk fetching component (row) given class k; filled column-wise
    template <typename Fetch>
    void put(int64_t col, const double* probs_row, Fetch fetch) {
        for (int64_t k = 0; k < K; ++k) {
            const double sp = std::sqrt(probs_row[k]);
            for (int64_t r = 0; r < Gd; ++r) s1[static_cast<size_t>(r * n1 + col * K + k)] = sp * fetch(r, k);
        }
        for (int64_t r = 0; r < Gd; ++r) {
            double acc = 0;
            for (int64_t k = 0; k < K; ++k) acc += probs_row[k] * fetch(r, k);
            s2[static_cast<size_t>(r * n2 + col)] = acc;
        }
    }
    void flush(Tensor& B) {
        MapMat Bm(B.data(), Gd, Gd);
        CMapMat S1(s1.data(), Gd, n1);
        CMapMat S2(s2.data(), Gd, n2);
        Bm.noalias() += S1 * S1.transpose();
        Bm.noalias() -= S2 * S2.transpose();
    }
};

}  // namespace

std::vector<CurvatureBlock> kfac_blocks(const Network& net, const Tensor& images, int chunk_size) {
    if (images.rank() != 4) throw CurvatureError("kfac_blocks: images must be N x C x H x W");
    const int64_t N = images.dim(0), K = net.classes;
    std::vector<Work> work = plan_blocks(net);

    std::map<int, BuiltNet> built;
    GStacker stk;
    std::vector<Tensor> gout;             // per layer, per class: grad at layer out
    std::vector<std::map<int, Tensor>> gx1;  // per layer: branch -> grad at x1, per class

    for (int64_t s = 0; s < N; s += chunk_size) {
        const int64_t e = std::min(N, s + chunk_size);
        const int bs = static_cast<int>(e - s);
        auto it = built.find(bs);
        if (it == built.end()) it = built.emplace(bs, net.build(bs)).first;
        BuiltNet& bn = it->second;
        Graph& g = bn.g;
        Tensor xin = rows_slice(images, s, e);
        g.set_input(bn.input, xin.reshaped({e - s, images.dim(1), 1, images.dim(2), images.dim(3)}));
        g.forward();
        const auto probs = softmax_rows(g.value(bn.logits));

        const size_t L = bn.layers.size();
        gout.assign(L * static_cast<size_t>(K), Tensor());
        gx1.assign(L, {});
        for (int64_t k = 0; k < K; ++k) {
            Tensor seed = Tensor::zeros({e - s, K});
            for (int64_t n = 0; n < e - s; ++n) seed.flat(n * K + k) = 1.0;
            g.backward(bn.logits, seed);
            for (size_t li = 0; li < L; ++li) {
                gout[li * static_cast<size_t>(K) + static_cast<size_t>(k)] = g.grad(bn.layers[li].out);
                for (size_t bi = 0; bi < bn.layers[li].branches.size(); ++bi) {
                    const BranchTap& bt = bn.layers[li].branches[bi];
                    if (bt.x1 >= 0) {
                        auto& m = gx1[li];
                        // keyed by branch*K + k
                        m.emplace(static_cast<int>(bi) * static_cast<int>(K) + static_cast<int>(k),
                                  g.grad(bt.x1));
                    }
                }
            }
        }

        for (Work& w : work) {
            const LayerTap& lt = bn.layers[static_cast<size_t>(w.blk.layer)];
            const BranchTap& bt = lt.branches[static_cast<size_t>(w.blk.branch)];
            const int64_t Bn = e - s;
            auto gout_at = [&](int64_t k) -> const Tensor& {
                return gout[static_cast<size_t>(w.blk.layer) * static_cast<size_t>(K) + static_cast<size_t>(k)];
            };
            if (w.project_in || w.project_out) {
                const int phi_node = w.phi_slot == 1 ? bt.phi1 : bt.phi2;
                if (w.Phi.empty()) w.Phi = g.value(phi_node);
            }
            switch (w.path) {
                case Path::Dense: {
                    const Tensor& X = g.value(bt.patches);  // (B, D)
                    CMapMat Xm(X.data(), Bn, w.rawD);
                    MapMat Am(w.blk.A.data(), w.rawD, w.rawD);
                    Am.noalias() += Xm.transpose() * Xm;
                    stk.reset(w.rawG, K, Bn);
                    for (int64_t n = 0; n < Bn; ++n)
                        stk.put(n, probs.data() + n * K, [&](int64_t r, int64_t k) {
                            return gout_at(k).flat(n * w.rawG + r);
                        });
                    stk.flush(w.blk.B);
                    w.blk.rows += Bn;
                    break;
                }
                case Path::Conv:
                case Path::Group: {
                    const Tensor& X = g.value(bt.patches);  // (B, T, D)
                    CMapMat Xm(X.data(), Bn * w.T, w.rawD);
                    MapMat Am(w.blk.A.data(), w.rawD, w.rawD);
                    Am.noalias() += Xm.transpose() * Xm;
                    // g component (n, co, t): Conv folds co over C'R with t = spatial,
                    // Group keeps co = C' with t over rotation x space; both are
                    // (B, Gd, T) flat on the layer-out gradient
                    stk.reset(w.rawG, K, Bn * w.T);
                    for (int64_t n = 0; n < Bn; ++n)
                        for (int64_t t = 0; t < w.T; ++t)
                            stk.put(n * w.T + t, probs.data() + n * K, [&](int64_t r, int64_t k) {
                                return gout_at(k).flat((n * w.rawG + r) * w.T + t);
                            });
                    stk.flush(w.blk.B);
                    w.blk.rows += Bn * w.T;
                    break;
                }
                case Path::FacIn: {
                    const Tensor& X = g.value(lt.in);  // (B, C, R, H, W) -> (B, Ci, P)
                    const int64_t Ci = w.channels, P = w.rawD / Ci;
                    std::vector<double> xc(static_cast<size_t>(Bn * P));
                    MapMat Am(w.blk.A.data(), w.rawD, w.rawD);
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        for (int64_t n = 0; n < Bn; ++n)
                            for (int64_t p = 0; p < P; ++p)
                                xc[static_cast<size_t>(n * P + p)] = X.flat((n * Ci + ci) * P + p);
                        CMapMat Xc(xc.data(), Bn, P);
                        Am.block(ci * P, ci * P, P, P).noalias() += Xc.transpose() * Xc;
                    }
                    stk.reset(w.rawG, K, Bn * Ci);
                    const int64_t Co = w.rawG;
                    std::vector<const Tensor*> gx(static_cast<size_t>(K));
                    for (int64_t k = 0; k < K; ++k)
                        gx[static_cast<size_t>(k)] = &gx1[static_cast<size_t>(w.blk.layer)].at(
                            w.blk.branch * static_cast<int>(K) + static_cast<int>(k));
                    for (int64_t n = 0; n < Bn; ++n)
                        for (int64_t ci = 0; ci < Ci; ++ci)
                            stk.put(n * Ci + ci, probs.data() + n * K, [&](int64_t r, int64_t k) {
                                return gx[static_cast<size_t>(k)]->flat((n * Co + r) * Ci + ci);
                            });
                    stk.flush(w.blk.B);
                    w.blk.rows += Bn * Ci;
                    break;
                }
                case Path::FacOut: {
                    const Tensor& X1 = g.value(bt.x1);  // (B, Co, Ci)
                    const int64_t Co = w.channels, Ci = w.rawD / Co, P = w.rawG;
                    std::vector<double> xc(static_cast<size_t>(Bn * Ci));
                    MapMat Am(w.blk.A.data(), w.rawD, w.rawD);
                    for (int64_t co = 0; co < Co; ++co) {
                        for (int64_t n = 0; n < Bn; ++n)
                            for (int64_t c = 0; c < Ci; ++c)
                                xc[static_cast<size_t>(n * Ci + c)] = X1.flat((n * Co + co) * Ci + c);
                        CMapMat Xc(xc.data(), Bn, Ci);
                        Am.block(co * Ci, co * Ci, Ci, Ci).noalias() += Xc.transpose() * Xc;
                    }
                    stk.reset(P, K, Bn * Co);
                    for (int64_t n = 0; n < Bn; ++n)
                        for (int64_t co = 0; co < Co; ++co)
                            stk.put(n * Co + co, probs.data() + n * K, [&](int64_t r, int64_t k) {
                                return gout_at(k).flat((n * Co + co) * P + r);
                            });
                    stk.flush(w.blk.B);
                    w.blk.rows += Bn * Co;
                    break;
                }
            }
        }
    }

    std::vector<CurvatureBlock> out;
    out.reserve(work.size());
    for (Work& w : work) {
        if (w.project_in) w.blk.A = project_columns(w.blk.A, w.Phi, w.channels);
        if (w.project_out) w.blk.B = project_matrix(w.blk.B, w.Phi);
        out.push_back(std::move(w.blk));
    }
    return out;
}

std::map<std::string, Tensor> exact_ggn(const Network& net, const Tensor& images) {
    if (images.rank() != 4) throw CurvatureError("exact_ggn: images must be N x C x H x W");
    const int64_t N = images.dim(0), K = net.classes;
    if (N > 16) throw CurvatureError("exact_ggn: oracle restricted to tiny batches");
    BuiltNet bn = net.build(static_cast<int>(N));
    Graph& g = bn.g;
    g.set_input(bn.input, images.reshaped({N, images.dim(1), 1, images.dim(2), images.dim(3)}));
    g.forward();
    const auto probs = softmax_rows(g.value(bn.logits));

    std::map<std::string, Tensor> ggn;
    std::map<std::string, Tensor> jrows;  // per tensor: K x numel Jacobian of one sample
    for (const auto& [name, t] : net.params) {
        if (t.size() > 5000)
            throw CurvatureError("exact_ggn: tensor '" + name + "' too large for the dense oracle");
        ggn.emplace(name, Tensor::zeros({t.size(), t.size()}));
        jrows.emplace(name, Tensor::zeros({K, t.size()}));
    }

    for (int64_t n = 0; n < N; ++n) {
        for (int64_t k = 0; k < K; ++k) {
            Tensor seed = Tensor::zeros({N, K});
            seed.flat(n * K + k) = 1.0;
            g.backward(bn.logits, seed);
            GradientMap gm = g.leaf_grads();
            for (auto& [name, grad] : gm) {
                Tensor& J = jrows.at(name);
                for (int64_t i = 0; i < grad.size(); ++i) J.flat(k * grad.size() + i) = grad.flat(i);
            }
        }
        Tensor lam({K, K});
        {
            Tensor pr({K});
            for (int64_t k = 0; k < K; ++k) pr.flat(k) = probs[static_cast<size_t>(n * K + k)];
            lam = loglik_hessian(pr);
        }
        for (auto& [name, J] : jrows) {
            const int64_t P = J.dim(1);
            Tensor& Gn = ggn.at(name);
            CMapMat Jm(J.data(), K, P);
            CMapMat Lm(lam.data(), K, K);
            MapMat Gm(Gn.data(), P, P);
            Gm.noalias() += Jm.transpose() * Lm * Jm;
        }
    }
    return ggn;
}

}  // namespace symmetria
