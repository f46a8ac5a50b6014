// Verification suites. Everything here re-derives a quantity through an
// independent route (finite differences, dense recomputation from per-sample
// tap values, explicit group actions) and reports the worst relative or
// absolute deviation against a pinned threshold.
#include "symmetria/checks.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "symmetria/curvature.hpp"
#include "symmetria/gradcheck.hpp"
#include "symmetria/groups.hpp"
#include "symmetria/laplace.hpp"
#include "symmetria/priors.hpp"
#include "symmetria/rng.hpp"

namespace symmetria {

namespace {

void fill_normal(Tensor& t, Rng& rng) {
    for (int64_t i = 0; i < t.size(); ++i) t.flat(i) = rng.normal();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat(i) - b.flat(i)));
    return m;
}

// Frobenius-relative deviation of an Eigen accumulator vs a stored factor
double rel_fro(const Eigen::MatrixXd& naive, const Tensor& prod) {
    double num = 0, den = 0;
    const int64_t n = prod.dim(0), m = prod.dim(1);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
            const double d = naive(i, j) - prod.flat(i * m + j);
            num += d * d;
            den += prod.flat(i * m + j) * prod.flat(i * m + j);
        }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

double rel_fro_tensors(const Tensor& a, const Tensor& b) {
    double num = 0, den = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = a.flat(i) - b.flat(i);
        num += d * d;
        den += b.flat(i) * b.flat(i);
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

std::vector<double> softmax_row(const Tensor& logits, int K) {
    std::vector<double> p(static_cast<size_t>(K));
    double mx = logits.flat(0);
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.flat(k));
    double zs = 0;
    for (int k = 0; k < K; ++k) {
        p[static_cast<size_t>(k)] = std::exp(logits.flat(k) - mx);
        zs += p[static_cast<size_t>(k)];
    }
    for (int k = 0; k < K; ++k) p[static_cast<size_t>(k)] /= zs;
    return p;
}

// accumulate one row's G^T Lambda G with Lambda = diag(p) - p p^T;
// Gk is K x G, one class gradient per row
void add_lambda_row(Eigen::MatrixXd& B, const Eigen::MatrixXd& Gk, const std::vector<double>& p) {
    Eigen::VectorXd gbar = Eigen::VectorXd::Zero(Gk.cols());
    for (int k = 0; k < Gk.rows(); ++k) {
        const double pk = p[static_cast<size_t>(k)];
        B.noalias() += pk * (Gk.row(k).transpose() * Gk.row(k));
        gbar.noalias() += pk * Gk.row(k).transpose();
    }
    B.noalias() -= gbar * gbar.transpose();
}

struct NaiveFactors {
    Eigen::MatrixXd A, B;
    int64_t rows = 0;
};

NaiveFactors& factors_at(std::map<std::string, NaiveFactors>& acc, const std::string& name,
                         int64_t D, int64_t G) {
    auto it = acc.find(name);
    if (it == acc.end()) {
        NaiveFactors f;
        f.A = Eigen::MatrixXd::Zero(D, D);
        f.B = Eigen::MatrixXd::Zero(G, G);
        it = acc.emplace(name, std::move(f)).first;
    }
    return it->second;
}

// definitional recomputation of both Kronecker factors for one branch of one
// sample, straight from forward values and per-class gradients at the taps
void accumulate_branch(const Network& net, const BuiltNet& bt, int li, int bi,
                       const std::vector<double>& p, const std::vector<Tensor>& gout,
                       const std::vector<Tensor>& gx1, std::map<std::string, NaiveFactors>& acc) {
    const BranchSpec& sp = net.layers[static_cast<size_t>(li)].branches[static_cast<size_t>(bi)];
    const BranchTap& tap = bt.layers[static_cast<size_t>(li)].branches[static_cast<size_t>(bi)];
    const int K = static_cast<int>(p.size());
    const int64_t P = static_cast<int64_t>(sp.H) * sp.W;
    const int64_t Ci = static_cast<int64_t>(sp.C_in) * sp.R;
    const int64_t Co = static_cast<int64_t>(sp.C_out) * sp.R;
    auto pname = [&](const char* t) { return net.param_name(li, bi, t); };
    const Tensor& xin = bt.g.value(bt.layers[static_cast<size_t>(li)].in);

    switch (sp.kind) {
        case BranchKind::FC: {
            const int64_t D = Ci * P, G = Co * P;
            NaiveFactors& f = factors_at(acc, pname("w"), D, G);
            Eigen::VectorXd a(D);
            for (int64_t d = 0; d < D; ++d) a(d) = xin.flat(d);
            f.A.noalias() += a * a.transpose();
            Eigen::MatrixXd Gk(K, G);
            for (int k = 0; k < K; ++k)
                for (int64_t g = 0; g < G; ++g) Gk(k, g) = gout[static_cast<size_t>(k)].flat(g);
            add_lambda_row(f.B, Gk, p);
            f.rows += 1;
            break;
        }
        case BranchKind::CONV:
        case BranchKind::GCONV:
        case BranchKind::PGCONV:
        case BranchKind::SCONV: {
            const Tensor& pm = bt.g.value(tap.patches);  // (1, T, D_raw)
            const int64_t T = pm.dim(1), Draw = pm.dim(2);
            const int64_t G = gout[0].size() / T;
            const bool proj = sp.kind == BranchKind::SCONV;
            const Tensor* phi = proj ? &bt.g.value(tap.phi1) : nullptr;  // (S*S, M)
            const int64_t S2 = proj ? phi->dim(0) : 0;
            const int64_t M = proj ? phi->dim(1) : 0;
            const int64_t D = proj ? Ci * M : Draw;
            NaiveFactors& f = factors_at(acc, pname(proj ? "u" : "w"), D, G);
            Eigen::VectorXd a(D);
            Eigen::MatrixXd Gk(K, G);
            for (int64_t t = 0; t < T; ++t) {
                if (!proj) {
                    for (int64_t d = 0; d < D; ++d) a(d) = pm.flat(t * Draw + d);
                } else {
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t m = 0; m < M; ++m) {
                            double s = 0;
                            for (int64_t o = 0; o < S2; ++o)
                                s += pm.flat(t * Draw + ci * S2 + o) * phi->flat(o * M + m);
                            a(ci * M + m) = s;
                        }
                }
                f.A.noalias() += a * a.transpose();
                for (int k = 0; k < K; ++k)
                    for (int64_t g = 0; g < G; ++g)
                        Gk(k, g) = gout[static_cast<size_t>(k)].flat(g * T + t);
                add_lambda_row(f.B, Gk, p);
                f.rows += 1;
            }
            break;
        }
        case BranchKind::FFC:
        case BranchKind::SFC: {
            const bool proj = sp.kind == BranchKind::SFC;
            const Tensor& x1v = bt.g.value(tap.x1);  // (1, Co, Ci)
            const Tensor* phi1 = proj ? &bt.g.value(tap.phi1) : nullptr;  // (P, M1)
            const Tensor* phi2 = proj ? &bt.g.value(tap.phi2) : nullptr;  // (P, M2)
            const int64_t M1 = proj ? phi1->dim(1) : 0;
            const int64_t M2 = proj ? phi2->dim(1) : 0;
            {   // input-side factor: one row per input channel
                const int64_t Dp = proj ? M2 : P;
                NaiveFactors& f = factors_at(acc, pname(proj ? "u2" : "t2"), Ci * Dp, Co);
                Eigen::MatrixXd Gk(K, Co);
                for (int64_t ci = 0; ci < Ci; ++ci) {
                    Eigen::VectorXd a = Eigen::VectorXd::Zero(Ci * Dp);
                    if (!proj) {
                        for (int64_t q = 0; q < P; ++q) a(ci * P + q) = xin.flat(ci * P + q);
                    } else {
                        for (int64_t m = 0; m < M2; ++m) {
                            double s = 0;
                            for (int64_t q = 0; q < P; ++q)
                                s += xin.flat(ci * P + q) * phi2->flat(q * M2 + m);
                            a(ci * M2 + m) = s;
                        }
                    }
                    f.A.noalias() += a * a.transpose();
                    for (int k = 0; k < K; ++k)
                        for (int64_t co = 0; co < Co; ++co)
                            Gk(k, co) = gx1[static_cast<size_t>(k)].flat(co * Ci + ci);
                    add_lambda_row(f.B, Gk, p);
                    f.rows += 1;
                }
            }
            {   // output-side factor: one row per output channel
                const int64_t Gp = proj ? M1 : P;
                NaiveFactors& f = factors_at(acc, pname(proj ? "u1" : "t1"), Co * Ci, Gp);
                Eigen::MatrixXd Gk(K, Gp);
                for (int64_t co = 0; co < Co; ++co) {
                    Eigen::VectorXd a = Eigen::VectorXd::Zero(Co * Ci);
                    for (int64_t ci = 0; ci < Ci; ++ci) a(co * Ci + ci) = x1v.flat(co * Ci + ci);
                    f.A.noalias() += a * a.transpose();
                    for (int k = 0; k < K; ++k) {
                        if (!proj) {
                            for (int64_t q = 0; q < P; ++q)
                                Gk(k, q) = gout[static_cast<size_t>(k)].flat(co * P + q);
                        } else {
                            for (int64_t m = 0; m < M1; ++m) {
                                double s = 0;
                                for (int64_t q = 0; q < P; ++q)
                                    s += gout[static_cast<size_t>(k)].flat(co * P + q) *
                                         phi1->flat(q * M1 + m);
                                Gk(k, m) = s;
                            }
                        }
                    }
                    add_lambda_row(f.B, Gk, p);
                    f.rows += 1;
                }
            }
            break;
        }
    }
}

std::map<std::string, NaiveFactors> naive_kfac(const Network& net, const Tensor& images) {
    BuiltNet bt = net.build(1);
    const int K = net.classes;
    const int64_t N = images.dim(0), isz = images.size() / N;
    const size_t L = net.layers.size();
    Tensor x({1, net.in_channels, 1, net.spatial, net.spatial});
    const Tensor oh = Tensor::zeros({1, K});
    std::map<std::string, NaiveFactors> acc;
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t i = 0; i < isz; ++i) x.flat(i) = images.flat(n * isz + i);
        bt.g.set_input(bt.input, x);
        bt.g.set_input(bt.onehot, oh);
        bt.g.forward();
        const std::vector<double> p = softmax_row(bt.g.value(bt.logits), K);
        std::vector<std::vector<Tensor>> gout(L);
        std::vector<std::vector<std::vector<Tensor>>> gx1(L);
        for (size_t li = 0; li < L; ++li) gx1[li].resize(net.layers[li].branches.size());
        for (int k = 0; k < K; ++k) {
            Tensor seed = Tensor::zeros({1, K});
            seed.flat(k) = 1.0;
            bt.g.backward(bt.logits, seed);
            for (size_t li = 0; li < L; ++li) {
                gout[li].push_back(bt.g.grad(bt.layers[li].out));
                for (size_t bi = 0; bi < net.layers[li].branches.size(); ++bi)
                    if (bt.layers[li].branches[bi].x1 >= 0)
                        gx1[li][bi].push_back(bt.g.grad(bt.layers[li].branches[bi].x1));
            }
        }
        for (size_t li = 0; li < L; ++li)
            for (size_t bi = 0; bi < net.layers[li].branches.size(); ++bi)
                accumulate_branch(net, bt, static_cast<int>(li), static_cast<int>(bi), p,
                                  gout[li], gx1[li][bi], acc);
    }
    return acc;
}

const CurvatureBlock& find_block(const std::vector<CurvatureBlock>& curv, const std::string& param) {
    for (const auto& b : curv)
        if (b.param == param) return b;
    throw CheckError("no curvature block for " + param);
}

// ---------------------------------------------------------------------------
// gradient checks
// ---------------------------------------------------------------------------

// worst finite-difference deviation over (a subset of) the trainable leaves
double net_grad_err(Network& net, uint64_t seed, bool anchors_only) {
    const int B = 2, K = net.classes;
    BuiltNet bt = net.build(B);
    Rng rng(splitmix64(seed ^ 0x67726164ULL));
    Tensor images({B, net.in_channels, 1, net.spatial, net.spatial});
    fill_normal(images, rng);
    Tensor onehot = Tensor::zeros({B, K});
    for (int b = 0; b < B; ++b) onehot.flat(b * K + static_cast<int>(rng.uniform_int(K))) = 1.0;
    bt.g.set_input(bt.input, images);
    bt.g.set_input(bt.onehot, onehot);
    bt.g.forward();
    bt.g.backward(bt.nll_sum, Tensor::scalar(1.0));
    const GradientMap grads = bt.g.leaf_grads();
    double worst = 0;
    for (const auto& [name, analytic] : grads) {
        const std::string suffix = name.substr(name.rfind('.') + 1);
        if (anchors_only && suffix != "u" && suffix != "u1" && suffix != "u2") continue;
        const Tensor saved = net.params.at(name);
        auto fn = [&](const Tensor& v) {
            net.params.at(name) = v;
            bt.g.forward();
            return bt.g.value(bt.nll_sum).flat(0);
        };
        const Tensor numeric = finite_diff_grad(fn, saved);
        net.params.at(name) = saved;
        worst = std::max(worst, max_rel_err(analytic, numeric));
    }
    bt.g.forward();
    return worst;
}

Network kind_test_net(BranchKind kind, int c_in, int c_out, uint64_t seed) {
    return single_branch_net(kind, c_in, c_out, 4, 3, seed);
}

constexpr BranchKind kAllKinds[] = {BranchKind::FC,    BranchKind::FFC,   BranchKind::SFC,
                                    BranchKind::CONV,  BranchKind::SCONV, BranchKind::GCONV,
                                    BranchKind::PGCONV};

// ---------------------------------------------------------------------------
// tap-based Jacobian identity: assemble d logits / d theta from the same tap
// values the curvature pass reads, then verify against finite differences
// ---------------------------------------------------------------------------

double tap_jacobian_err(Network& net, uint64_t seed) {
    BuiltNet bt = net.build(1);
    const int K = net.classes;
    Rng rng(splitmix64(seed ^ 0x6a616342ULL));
    Tensor x({1, net.in_channels, 1, net.spatial, net.spatial});
    fill_normal(x, rng);
    bt.g.set_input(bt.input, x);
    bt.g.set_input(bt.onehot, Tensor::zeros({1, K}));
    bt.g.forward();

    const BranchSpec& sp = net.layers[0].branches[0];
    const BranchTap& tap = bt.layers[0].branches[0];
    const int64_t P = static_cast<int64_t>(sp.H) * sp.W;
    const int64_t Ci = static_cast<int64_t>(sp.C_in) * sp.R;
    const int64_t Co = static_cast<int64_t>(sp.C_out) * sp.R;
    const Tensor xin = bt.g.value(bt.layers[0].in);
    const bool conv_like = sp.kind == BranchKind::CONV || sp.kind == BranchKind::SCONV ||
                           sp.kind == BranchKind::GCONV || sp.kind == BranchKind::PGCONV;
    const Tensor pm = conv_like ? bt.g.value(tap.patches) : Tensor();
    const bool has_x1 = tap.x1 >= 0;
    const Tensor x1v = has_x1 ? bt.g.value(tap.x1) : Tensor();
    const Tensor phi1v = tap.phi1 >= 0 ? bt.g.value(tap.phi1) : Tensor();
    const Tensor phi2v = tap.phi2 >= 0 ? bt.g.value(tap.phi2) : Tensor();

    std::vector<Tensor> gout, gx1;
    for (int k = 0; k < K; ++k) {
        Tensor seedk = Tensor::zeros({1, K});
        seedk.flat(k) = 1.0;
        bt.g.backward(bt.logits, seedk);
        gout.push_back(bt.g.grad(bt.layers[0].out));
        if (has_x1) gx1.push_back(bt.g.grad(tap.x1));
    }

    std::vector<std::string> tensors;
    switch (sp.kind) {
        case BranchKind::FC: tensors = {"w"}; break;
        case BranchKind::FFC: tensors = {"t1", "t2"}; break;
        case BranchKind::SFC: tensors = {"u1", "u2"}; break;
        case BranchKind::SCONV: tensors = {"u"}; break;
        default: tensors = {"w"}; break;
    }

    double worst = 0;
    for (const std::string& tn : tensors) {
        const std::string full = net.param_name(0, 0, tn);
        const Tensor saved = net.params.at(full);
        for (int k = 0; k < K; ++k) {
            Tensor analytic = Tensor::zeros(saved.shape());
            const Tensor& gk = gout[static_cast<size_t>(k)];
            if (sp.kind == BranchKind::FC) {
                for (int64_t co = 0; co < Co; ++co)
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t pp = 0; pp < P; ++pp)
                            for (int64_t q = 0; q < P; ++q)
                                analytic.flat(((co * Ci + ci) * P + pp) * P + q) =
                                    xin.flat(ci * P + q) * gk.flat(co * P + pp);
            } else if (sp.kind == BranchKind::FFC && tn == "t1") {
                for (int64_t co = 0; co < Co; ++co)
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t pp = 0; pp < P; ++pp)
                            analytic.flat((co * Ci + ci) * P + pp) =
                                x1v.flat(co * Ci + ci) * gk.flat(co * P + pp);
            } else if (sp.kind == BranchKind::FFC && tn == "t2") {
                for (int64_t co = 0; co < Co; ++co)
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t q = 0; q < P; ++q)
                            analytic.flat((co * Ci + ci) * P + q) =
                                xin.flat(ci * P + q) *
                                gx1[static_cast<size_t>(k)].flat(co * Ci + ci);
            } else if (sp.kind == BranchKind::SFC && tn == "u1") {
                const int64_t M1 = saved.dim(2);
                for (int64_t co = 0; co < Co; ++co)
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t m = 0; m < M1; ++m) {
                            double s = 0;
                            for (int64_t pp = 0; pp < P; ++pp)
                                s += gk.flat(co * P + pp) * phi1v.flat(pp * M1 + m);
                            analytic.flat((co * Ci + ci) * M1 + m) = x1v.flat(co * Ci + ci) * s;
                        }
            } else if (sp.kind == BranchKind::SFC && tn == "u2") {
                const int64_t M2 = saved.dim(2);
                for (int64_t co = 0; co < Co; ++co)
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t m = 0; m < M2; ++m) {
                            double s = 0;
                            for (int64_t q = 0; q < P; ++q)
                                s += xin.flat(ci * P + q) * phi2v.flat(q * M2 + m);
                            analytic.flat((co * Ci + ci) * M2 + m) =
                                s * gx1[static_cast<size_t>(k)].flat(co * Ci + ci);
                        }
            } else if (sp.kind == BranchKind::SCONV) {
                const int64_t T = pm.dim(1), Draw = pm.dim(2);
                const int64_t M = saved.dim(2), S2 = phi1v.dim(0);
                for (int64_t co = 0; co < Co; ++co)
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t m = 0; m < M; ++m) {
                            double s = 0;
                            for (int64_t t = 0; t < T; ++t) {
                                double ap = 0;
                                for (int64_t o = 0; o < S2; ++o)
                                    ap += pm.flat(t * Draw + ci * S2 + o) * phi1v.flat(o * M + m);
                                s += ap * gk.flat(co * T + t);
                            }
                            analytic.flat((co * Ci + ci) * M + m) = s;
                        }
            } else {  // CONV / GCONV / PGCONV weight
                const int64_t T = pm.dim(1), Draw = pm.dim(2);
                const int64_t G = saved.dim(0);
                for (int64_t g = 0; g < G; ++g)
                    for (int64_t d = 0; d < Draw; ++d) {
                        double s = 0;
                        for (int64_t t = 0; t < T; ++t)
                            s += pm.flat(t * Draw + d) * gk.flat(g * T + t);
                        analytic.flat(g * Draw + d) = s;
                    }
            }
            auto fn = [&](const Tensor& v) {
                net.params.at(full) = v;
                bt.g.forward();
                return bt.g.value(bt.logits).flat(k);
            };
            const Tensor numeric = finite_diff_grad(fn, saved);
            net.params.at(full) = saved;
            worst = std::max(worst, max_rel_err(analytic, numeric));
        }
        bt.g.forward();
    }
    return worst;
}

// ---------------------------------------------------------------------------
// strict-menu equivariance
// ---------------------------------------------------------------------------

struct GElem {
    int s, a, b;
};

double strict_equiv_dev(BranchKind kind, uint64_t seed) {
    ArchConfig ac;
    ac.alpha = 2;
    ac.spatial = 12;
    ac.in_channels = 1;
    ac.classes = 4;
    ac.filter_size = 3;
    ac.menus = {{kind}};
    Network net = build_architecture(ac);
    net.init_params(splitmix64(seed ^ 0x65717569ULL));
    BuiltNet bt = net.build(1);

    const bool group = kind == BranchKind::GCONV || kind == BranchKind::PGCONV;
    // translations are multiples of 2^(#pools) so every polyphase stage halves
    // them exactly; rotations commute with the pools on even grids
    std::vector<GElem> elems = {{0, 4, 0}, {0, 0, 4}, {0, 4, 8}, {0, 8, 8}};
    if (group) {
        elems.push_back({1, 0, 0});
        elems.push_back({2, 0, 0});
        elems.push_back({3, 0, 0});
        elems.push_back({1, 4, 4});
        elems.push_back({3, 8, 4});
    }
    const GridGroup& pg = net.p4_at(net.spatial);

    // taps: every pathway layer's input past the first, the pooled head input
    // (invariant), and the logits (invariant)
    std::vector<size_t> pathway_taps;
    size_t head_idx = 0;
    for (size_t k = 1; k < net.layers.size(); ++k) {
        if (net.layers[k].head) {
            head_idx = k;
            break;
        }
        pathway_taps.push_back(k);
    }

    Rng rng(splitmix64(seed ^ 0x74726961ULL));
    for (int attempt = 0; attempt < 10; ++attempt) {
        Tensor x({1, 1, 1, ac.spatial, ac.spatial});
        fill_normal(x, rng);
        bt.g.set_input(bt.input, x);
        bt.g.set_input(bt.onehot, Tensor::zeros({1, ac.classes}));
        bt.g.forward();
        if (bt.g.any_pool_tie()) continue;
        std::vector<Tensor> base;
        for (size_t k : pathway_taps) base.push_back(bt.g.value(bt.layers[k].in));
        const Tensor base_head = bt.g.value(bt.layers[head_idx].in);
        const Tensor base_logits = bt.g.value(bt.logits);

        double dev = 0;
        bool tie = false;
        for (const GElem& e : elems) {
            const Tensor xg = act(pg, pg.element(e.s, e.a, e.b), x);
            bt.g.set_input(bt.input, xg);
            bt.g.forward();
            if (bt.g.any_pool_tie()) {
                tie = true;
                break;
            }
            for (size_t i = 0; i < pathway_taps.size(); ++i) {
                const size_t k = pathway_taps[i];
                const int Hk = net.layers[k].H;
                const int f = net.spatial / Hk;
                const GridGroup& pk = net.p4_at(Hk);
                const Tensor expect =
                    act(pk, pk.element(e.s, (e.a / f) % Hk, (e.b / f) % Hk), base[i]);
                dev = std::max(dev, max_abs_diff(expect, bt.g.value(bt.layers[k].in)));
            }
            dev = std::max(dev, max_abs_diff(base_head, bt.g.value(bt.layers[head_idx].in)));
            dev = std::max(dev, max_abs_diff(base_logits, bt.g.value(bt.logits)));
        }
        if (tie) continue;
        return dev;
    }
    return 1.0;  // no tie-free draw in 10 attempts; report as a failure
}

}  // namespace

// ---------------------------------------------------------------------------
// public suites
// ---------------------------------------------------------------------------

Network single_branch_net(BranchKind kind, int c_in, int c_out, int H, int classes,
                          uint64_t seed, int S, bool trainable_locations) {
    const bool group = kind == BranchKind::GCONV || kind == BranchKind::PGCONV;
    Network net;
    net.in_channels = c_in;
    net.spatial = H;
    net.classes = classes;
    net.R = group ? 4 : 1;

    LayerInfo L;
    L.C_in = c_in;
    L.C_out = c_out;
    L.H = L.W = H;
    L.R = net.R;
    L.relu = true;
    BranchSpec sp;
    sp.kind = kind;
    sp.C_in = c_in;
    sp.C_out = c_out;
    sp.H = sp.W = H;
    sp.R = net.R;
    sp.S = S;
    sp.trainable_locations = trainable_locations;
    if (kind == BranchKind::SCONV) sp.M1 = (S * S + 1) / 2;
    if (kind == BranchKind::SFC) sp.M1 = sp.M2 = (H * H + 1) / 2;
    L.branches = {sp};
    net.layers.push_back(L);

    auto head = [&](int ci, int co, bool relu) {
        LayerInfo h;
        h.C_in = ci;
        h.C_out = co;
        h.H = h.W = 1;
        h.R = 1;
        h.relu = relu;
        h.head = true;
        BranchSpec hs;
        hs.kind = BranchKind::FC;
        hs.C_in = ci;
        hs.C_out = co;
        hs.H = hs.W = 1;
        hs.R = 1;
        hs.S = 1;
        h.branches = {hs};
        net.layers.push_back(h);
    };
    head(c_out, 4 * c_out, true);
    head(4 * c_out, classes, false);
    net.init_params(seed);
    return net;
}

std::vector<CheckRow> check_gradcheck(uint64_t seed, int instances) {
    std::vector<CheckRow> rows;
    const double thr = 1e-4;
    int ki = 0;
    for (BranchKind kind : kAllKinds) {
        double worst = 0;
        for (int i = 0; i < instances; ++i) {
            Network net = kind_test_net(kind, 2, 2, splitmix64(seed + 977u * static_cast<uint64_t>(ki) + static_cast<uint64_t>(i)));
            worst = std::max(worst, net_grad_err(net, seed + 31u * static_cast<uint64_t>(i) + static_cast<uint64_t>(ki), false));
        }
        rows.push_back({"gradcheck." + branch_kind_name(kind), worst, thr, worst < thr});
        ++ki;
    }
    return rows;
}

std::vector<CheckRow> check_anchor_chain(uint64_t seed, int instances) {
    std::vector<CheckRow> rows;
    const double thr = 1e-4;
    for (BranchKind kind : {BranchKind::SCONV, BranchKind::SFC}) {
        double worst = 0;
        for (int i = 0; i < instances; ++i) {
            Network net = kind_test_net(kind, 2, 2, splitmix64(seed ^ (0xa5c0ULL + static_cast<uint64_t>(i))));
            worst = std::max(worst, net_grad_err(net, seed ^ (0x51ULL * static_cast<uint64_t>(i + 1)), true));
        }
        rows.push_back({"anchor." + branch_kind_name(kind), worst, thr, worst < thr});
    }
    return rows;
}

std::vector<CheckRow> check_kfac(uint64_t seed) {
    std::vector<CheckRow> rows;

    {   // single-sample exactness: dense expansion equals the exact GGN block
        Network net = single_branch_net(BranchKind::FC, 1, 2, 3, 3, splitmix64(seed ^ 0xfc01ULL));
        Rng rng(splitmix64(seed ^ 0xfc02ULL));
        Tensor images({1, 1, 3, 3});
        fill_normal(images, rng);
        const auto curv = kfac_blocks(net, images, 8);
        const auto exact = exact_ggn(net, images);
        double worst = 0;
        for (const auto& blk : curv)
            worst = std::max(worst, rel_fro_tensors(expand_kronecker(blk), exact.at(blk.param)));
        rows.push_back({"kfac.fc_single_sample", worst, 1e-8, worst < 1e-8});
    }

    {   // a 1x1 convolution on a 1x1 grid must carry the dense FC block
        Network cnet = single_branch_net(BranchKind::CONV, 2, 3, 1, 3, splitmix64(seed ^ 0x1f1ULL), 1);
        Network fnet = single_branch_net(BranchKind::FC, 2, 3, 1, 3, splitmix64(seed ^ 0x1f1ULL), 1);
        const std::vector<std::pair<std::string, std::string>> copies = {
            {"L0.CONV.w", "L0.FC.w"}, {"L1.FC.w", "L1.FC.w"}, {"L2.FC.w", "L2.FC.w"}};
        for (const auto& [src, dst] : copies) {
            const Tensor& s = cnet.params.at(src);
            Tensor& d = fnet.params.at(dst);
            for (int64_t i = 0; i < s.size(); ++i) d.flat(i) = s.flat(i);
        }
        Rng rng(splitmix64(seed ^ 0x1f2ULL));
        Tensor images({5, 2, 1, 1});
        fill_normal(images, rng);
        const auto cc = kfac_blocks(cnet, images, 3);
        const auto fc = kfac_blocks(fnet, images, 3);
        double worst = 0;
        for (const auto& [src, dst] : copies) {
            const CurvatureBlock& a = find_block(cc, src);
            const CurvatureBlock& b = find_block(fc, dst);
            if (a.rows != b.rows) worst = std::max(worst, 1.0);
            worst = std::max(worst, rel_fro_tensors(a.A, b.A));
            worst = std::max(worst, rel_fro_tensors(a.B, b.B));
        }
        rows.push_back({"kfac.conv1x1_reduction", worst, 1e-12, worst < 1e-12});
    }

    int ki = 0;
    for (BranchKind kind : kAllKinds) {  // definitional recomputation
        Network net = kind_test_net(kind, 2, 2, splitmix64(seed ^ (0xdef0ULL + static_cast<uint64_t>(ki))));
        Rng rng(splitmix64(seed ^ (0xdefaULL + static_cast<uint64_t>(ki))));
        Tensor images({3, 2, 4, 4});
        fill_normal(images, rng);
        const auto curv = kfac_blocks(net, images, 2);
        const auto naive = naive_kfac(net, images);
        double worst = 0;
        for (const auto& blk : curv) {
            const auto it = naive.find(blk.param);
            if (it == naive.end() || it->second.rows != blk.rows) {
                worst = std::max(worst, 1.0);
                continue;
            }
            worst = std::max(worst, rel_fro(it->second.A, blk.A));
            worst = std::max(worst, rel_fro(it->second.B, blk.B));
        }
        rows.push_back({"kfac.definitional." + branch_kind_name(kind), worst, 1e-9, worst < 1e-9});
        ++ki;
    }

    ki = 0;
    for (BranchKind kind : kAllKinds) {  // tap Jacobian identity vs finite differences
        Network net = single_branch_net(kind, 1, 2, 4, 3, splitmix64(seed ^ (0x7a70ULL + static_cast<uint64_t>(ki))));
        const double err = tap_jacobian_err(net, seed + static_cast<uint64_t>(ki));
        rows.push_back({"kfac.tap_jacobian." + branch_kind_name(kind), err, 1e-4, err < 1e-4});
        ++ki;
    }
    return rows;
}

std::vector<CheckRow> check_equivariance(uint64_t seed) {
    std::vector<CheckRow> rows;
    const double thr = 1e-10;
    for (BranchKind kind : {BranchKind::CONV, BranchKind::SCONV, BranchKind::GCONV, BranchKind::PGCONV}) {
        const double dev = strict_equiv_dev(kind, seed);
        rows.push_back({"equiv." + branch_kind_name(kind), dev, thr, dev < thr});
    }
    return rows;
}

std::vector<CheckRow> check_marglik(uint64_t seed) {
    std::vector<CheckRow> rows;

    {   // closed forms vs dense linear algebra on a real curvature pass
        Network net = single_branch_net(BranchKind::FC, 1, 2, 3, 3, splitmix64(seed ^ 0x3a01ULL));
        Rng rng(splitmix64(seed ^ 0x3a02ULL));
        Tensor images({4, 1, 3, 3});
        fill_normal(images, rng);
        const auto curv = kfac_blocks(net, images, 3);
        const PriorSet priors = PriorSet::build(net, PriorConfig{});
        const auto spectra = block_spectra(curv, priors);
        std::vector<double> rho, vsq = priors.block_sq_norms(net.params);
        for (size_t b = 0; b < priors.blocks.size(); ++b)
            rho.push_back(0.3 + 0.2 * static_cast<double>(b));
        const MarglikParts parts = marglik(0.0, priors.blocks, rho, vsq, spectra);
        const auto gammas = effective_params(priors.blocks, rho, spectra);
        double dense_ld = 0, dense_g = 0, ana_g = 0;
        for (size_t b = 0; b < priors.blocks.size(); ++b) {
            const double alpha = std::exp(rho[b]);
            for (const std::string& tn : priors.blocks[b].governed) {
                const Tensor Hd = expand_kronecker(find_block(curv, tn));
                dense_ld += dense_half_logdet(Hd, alpha);
                dense_g += dense_gamma(Hd, alpha);
            }
            ana_g += gammas[b];
        }
        const double e1 = rel_err(parts.half_logdet, dense_ld);
        rows.push_back({"marglik.half_logdet_dense", e1, 1e-8, e1 < 1e-8});
        const double e2 = rel_err(ana_g, dense_g);
        rows.push_back({"marglik.gamma_dense", e2, 1e-8, e2 < 1e-8});
    }

    {   // frozen oracle: products {2, 6} at alpha = 2 give gamma = 1.25
        std::vector<PriorBlock> blocks(1);
        blocks[0].name = "oracle";
        blocks[0].P = 2;
        std::vector<BlockSpectrum> spectra(1);
        spectra[0].prior_block = 0;
        spectra[0].products = {2.0, 6.0};
        const auto g = effective_params(blocks, {std::log(2.0)}, spectra);
        const double err = std::abs(g[0] - 1.25);
        rows.push_back({"marglik.gamma_oracle", err, 1e-12, err < 1e-12});
    }

    {   // gamma limits: alpha -> 0 recovers P, alpha -> inf kills the block
        std::vector<PriorBlock> blocks(1);
        blocks[0].name = "limits";
        blocks[0].P = 5;
        std::vector<BlockSpectrum> spectra(1);
        spectra[0].prior_block = 0;
        spectra[0].products = {1, 2, 3, 4, 5};
        const double lo = std::abs(effective_params(blocks, {-40.0}, spectra)[0] - 5.0);
        rows.push_back({"marglik.gamma_limit_low_alpha", lo, 1e-9, lo < 1e-9});
        const double hi = effective_params(blocks, {40.0}, spectra)[0];
        rows.push_back({"marglik.gamma_limit_high_alpha", hi, 1e-9, hi < 1e-9});
    }

    {   // hyper-gradient vs central differences, including prior-only dims
        Network net = single_branch_net(BranchKind::SCONV, 1, 2, 4, 3, splitmix64(seed ^ 0x3a07ULL));
        Rng rng(splitmix64(seed ^ 0x3a08ULL));
        Tensor images({4, 1, 4, 4});
        fill_normal(images, rng);
        const auto curv = kfac_blocks(net, images, 2);
        const PriorSet priors = PriorSet::build(net, PriorConfig{});
        const auto spectra = block_spectra(curv, priors);
        const std::vector<double> vsq = priors.block_sq_norms(net.params);
        std::vector<double> rho;
        for (size_t b = 0; b < priors.blocks.size(); ++b)
            rho.push_back(-0.4 + 0.25 * static_cast<double>(b + 1));
        const auto analytic = marglik_hypergrad(priors.blocks, rho, vsq, spectra);
        const double h = 1e-6;
        double worst = 0;
        for (size_t b = 0; b < priors.blocks.size(); ++b) {
            std::vector<double> rp = rho, rm = rho;
            rp[b] += h;
            rm[b] -= h;
            const double num = (marglik(0.0, priors.blocks, rp, vsq, spectra).total -
                                marglik(0.0, priors.blocks, rm, vsq, spectra).total) /
                               (2 * h);
            worst = std::max(worst, rel_err(analytic[b], num));
        }
        rows.push_back({"marglik.hypergrad_fd", worst, 1e-5, worst < 1e-5});
    }
    return rows;
}

std::vector<CheckRow> run_check_suite(const std::string& suite, uint64_t seed) {
    if (suite == "gradcheck") {
        auto rows = check_gradcheck(seed);
        const auto anchor = check_anchor_chain(seed);
        rows.insert(rows.end(), anchor.begin(), anchor.end());
        return rows;
    }
    if (suite == "kfac") return check_kfac(seed);
    if (suite == "equivariance") return check_equivariance(seed);
    if (suite == "marglik") return check_marglik(seed);
    throw CheckError("unknown check suite '" + suite +
                     "' (expected gradcheck | kfac | equivariance | marglik)");
}

bool all_pass(const std::vector<CheckRow>& rows) {
    for (const auto& r : rows)
        if (!r.pass) return false;
    return true;
}

std::string render_check_table(const std::vector<CheckRow>& rows) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-36s %13s %13s  %s\n", "name", "measured", "threshold",
                  "verdict");
    out += line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-36s %13.4e %13.4e  %s\n", r.name.c_str(), r.measured,
                      r.threshold, r.pass ? "PASS" : "FAIL");
        out += line;
    }
    return out;
}

}  // namespace symmetria
