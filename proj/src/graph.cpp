#include "symmetria/graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace symmetria {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::vector<int64_t> transpose_map(const Shape& shape, const std::vector<int>& order) {
    const auto strides = row_major_strides(shape);
    const int r = static_cast<int>(shape.size());
    if (static_cast<int>(order.size()) != r) throw GraphError("transpose_map: order rank mismatch");
    Shape tdims(order.size());
    std::vector<int64_t> tstr(order.size());
    for (size_t i = 0; i < order.size(); ++i) {
        tdims[i] = shape[static_cast<size_t>(order[i])];
        tstr[i] = strides[static_cast<size_t>(order[i])];
    }
    std::vector<int64_t> out(static_cast<size_t>(numel(shape)));
    std::vector<int64_t> ix(order.size(), 0);
    int64_t src = 0;
    for (size_t pos = 0; pos < out.size(); ++pos) {
        out[pos] = src;
        for (int d = r - 1; d >= 0; --d) {
            src += tstr[static_cast<size_t>(d)];
            if (++ix[static_cast<size_t>(d)] < tdims[static_cast<size_t>(d)]) break;
            src -= tstr[static_cast<size_t>(d)] * tdims[static_cast<size_t>(d)];
            ix[static_cast<size_t>(d)] = 0;
        }
    }
    return out;
}

int Graph::push(Node n) {
    n.val = Tensor(n.shape, prec_);
    n.grad = Tensor(n.shape, Precision::Real64);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_exists(int n) const {
    if (n < 0 || n >= size()) throw GraphError("node id out of range");
}

int Graph::leaf(const std::string& name, const Tensor* storage, bool trainable) {
    if (!storage) throw GraphError("leaf '" + name + "' has no storage");
    Node n;
    n.op = Op::Leaf;
    n.shape = storage->shape();
    n.name = name;
    n.trainable = trainable;
    n.bound = storage;
    return push(std::move(n));
}

int Graph::input(const std::string& name, Shape shape) {
    Node n;
    n.op = Op::Input;
    n.shape = std::move(shape);
    n.name = name;
    return push(std::move(n));
}

int Graph::constant(Tensor value) {
    Node n;
    n.op = Op::Const;
    n.shape = value.shape();
    int id = push(std::move(n));
    at(id).val = std::move(value);
    return id;
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw GraphError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

int Graph::add(int a, int b) {
    check_exists(a); check_exists(b);
    require_same_shape(at(a).val, at(b).val, "add");
    Node n; n.op = Op::Add; n.shape = at(a).shape; n.in = {a, b};
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    check_exists(a); check_exists(b);
    require_same_shape(at(a).val, at(b).val, "sub");
    Node n; n.op = Op::Sub; n.shape = at(a).shape; n.in = {a, b};
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    check_exists(a); check_exists(b);
    require_same_shape(at(a).val, at(b).val, "mul");
    Node n; n.op = Op::Mul; n.shape = at(a).shape; n.in = {a, b};
    return push(std::move(n));
}

int Graph::scale(int a, double alpha) {
    check_exists(a);
    Node n; n.op = Op::Scale; n.shape = at(a).shape; n.in = {a}; n.alpha = alpha;
    return push(std::move(n));
}

int Graph::scale_by(int a, int s) {
    check_exists(a); check_exists(s);
    if (at(s).val.size() != 1) throw GraphError("scale_by: scalar operand must have one element");
    Node n; n.op = Op::ScaleBy; n.shape = at(a).shape; n.in = {a, s};
    return push(std::move(n));
}

int Graph::contract(int a, int b, std::vector<std::pair<int, int>> sum_pairs,
                    std::vector<std::pair<int, int>> keep_pairs) {
    check_exists(a); check_exists(b);
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    const int ra = static_cast<int>(sa.size()), rb = static_cast<int>(sb.size());
    std::vector<bool> used_a(static_cast<size_t>(ra), false), used_b(static_cast<size_t>(rb), false);
    auto claim = [&](int ax, int bx, const char* kind) {
        if (ax < 0 || ax >= ra || bx < 0 || bx >= rb)
            throw GraphError(std::string("contract: ") + kind + " axis out of range for " +
                             shape_str(sa) + " vs " + shape_str(sb));
        if (used_a[static_cast<size_t>(ax)] || used_b[static_cast<size_t>(bx)])
            throw GraphError("contract: axis used twice");
        if (sa[static_cast<size_t>(ax)] != sb[static_cast<size_t>(bx)])
            throw GraphError(std::string("contract: ") + kind + " extent mismatch between " +
                             shape_str(sa) + " and " + shape_str(sb));
        used_a[static_cast<size_t>(ax)] = used_b[static_cast<size_t>(bx)] = true;
    };
    for (auto [ax, bx] : keep_pairs) claim(ax, bx, "batched");
    for (auto [ax, bx] : sum_pairs) claim(ax, bx, "contracted");

    ContractPlan plan;
    plan.sum_pairs = sum_pairs;
    plan.keep_pairs = keep_pairs;
    std::vector<int> order_a, order_b;
    Shape out_shape;
    for (auto [ax, bx] : keep_pairs) {
        order_a.push_back(ax);
        out_shape.push_back(sa[static_cast<size_t>(ax)]);
        plan.D *= sa[static_cast<size_t>(ax)];
        (void)bx;
    }
    std::vector<int> rest_a, rest_b;
    for (int i = 0; i < ra; ++i)
        if (!used_a[static_cast<size_t>(i)]) rest_a.push_back(i);
    for (int i = 0; i < rb; ++i)
        if (!used_b[static_cast<size_t>(i)]) rest_b.push_back(i);
    for (int i : rest_a) { order_a.push_back(i); out_shape.push_back(sa[static_cast<size_t>(i)]); plan.M *= sa[static_cast<size_t>(i)]; }
    for (auto [ax, bx] : sum_pairs) { order_a.push_back(ax); plan.K *= sa[static_cast<size_t>(ax)]; (void)bx; }
    plan.perm_a = transpose_map(sa, order_a);

    for (auto [ax, bx] : keep_pairs) { order_b.push_back(bx); (void)ax; }
    for (auto [ax, bx] : sum_pairs) { order_b.push_back(bx); (void)ax; }
    for (int i : rest_b) { order_b.push_back(i); out_shape.push_back(sb[static_cast<size_t>(i)]); plan.N *= sb[static_cast<size_t>(i)]; }
    plan.perm_b = transpose_map(sb, order_b);

    if (out_shape.empty()) out_shape = {1};
    Node n; n.op = Op::Contract; n.shape = std::move(out_shape); n.in = {a, b};
    n.plan = std::move(plan);
    return push(std::move(n));
}

int Graph::relu(int a) {
    check_exists(a);
    Node n; n.op = Op::Relu; n.shape = at(a).shape; n.in = {a};
    return push(std::move(n));
}

int Graph::exp_(int a) {
    check_exists(a);
    Node n; n.op = Op::Exp; n.shape = at(a).shape; n.in = {a};
    return push(std::move(n));
}

int Graph::square(int a) {
    check_exists(a);
    Node n; n.op = Op::Square; n.shape = at(a).shape; n.in = {a};
    return push(std::move(n));
}

int Graph::sum(int a, std::vector<int> axes) {
    check_exists(a);
    const Shape& sa = at(a).shape;
    std::vector<bool> red(sa.size(), false);
    for (int ax : axes) {
        if (ax < 0 || ax >= static_cast<int>(sa.size())) throw GraphError("sum: axis out of range");
        red[static_cast<size_t>(ax)] = true;
    }
    Shape out_shape;
    for (size_t i = 0; i < sa.size(); ++i)
        if (!red[i]) out_shape.push_back(sa[i]);
    if (out_shape.empty()) out_shape = {1};

    // reduce map: source flat index -> target flat index
    const auto sstr = row_major_strides(sa);
    Shape odims = out_shape;
    const auto ostr = row_major_strides(odims);
    std::vector<int64_t> map(static_cast<size_t>(numel(sa)));
    std::vector<int64_t> ix(sa.size(), 0);
    for (size_t pos = 0; pos < map.size(); ++pos) {
        int64_t t = 0;
        int od = 0;
        for (size_t d = 0; d < sa.size(); ++d)
            if (!red[d]) { t += ix[d] * ostr[static_cast<size_t>(od)]; ++od; }
        map[pos] = t;
        for (int d = static_cast<int>(sa.size()) - 1; d >= 0; --d) {
            if (++ix[static_cast<size_t>(d)] < sa[static_cast<size_t>(d)]) break;
            ix[static_cast<size_t>(d)] = 0;
        }
    }
    Node n; n.op = Op::Sum; n.shape = std::move(out_shape); n.in = {a};
    n.axes = std::move(axes);
    n.idx = std::move(map);
    return push(std::move(n));
}

int Graph::gather(int a, std::vector<int64_t> idx, Shape out_shape) {
    check_exists(a);
    const int64_t limit = at(a).val.size();
    if (static_cast<int64_t>(idx.size()) != numel(out_shape))
        throw GraphError("gather: index count does not match output shape " + shape_str(out_shape));
    for (int64_t i : idx)
        if (i < 0 || i >= limit) throw GraphError("gather: index out of range");
    Node n; n.op = Op::Gather; n.shape = std::move(out_shape); n.in = {a};
    n.idx = std::move(idx);
    return push(std::move(n));
}

int Graph::permute(int a, std::vector<int> axes) {
    check_exists(a);
    const Shape& sa = at(a).shape;
    Shape out_shape;
    for (int ax : axes) out_shape.push_back(sa.at(static_cast<size_t>(ax)));
    Node n; n.op = Op::Permute; n.shape = std::move(out_shape); n.in = {a};
    n.axes = axes;
    n.idx = transpose_map(sa, axes);
    return push(std::move(n));
}

int Graph::reshape(int a, Shape shape) {
    check_exists(a);
    if (numel(shape) != at(a).val.size())
        throw GraphError("reshape " + shape_str(at(a).shape) + " -> " + shape_str(shape) +
                         " changes element count");
    Node n; n.op = Op::Reshape; n.shape = std::move(shape); n.in = {a};
    return push(std::move(n));
}

int Graph::log_softmax(int a) {
    check_exists(a);
    if (at(a).shape.size() < 1) throw GraphError("log_softmax: rank >= 1 required");
    Node n; n.op = Op::LogSoftmax; n.shape = at(a).shape; n.in = {a};
    return push(std::move(n));
}

int Graph::polyphase_pool(int a) {
    check_exists(a);
    const Shape& s = at(a).shape;
    if (s.size() != 5) throw GraphError("polyphase_pool: expected B x C x R x H x W, got " + shape_str(s));
    if (s[3] % 2 != 0 || s[4] % 2 != 0)
        throw GraphError("polyphase_pool: spatial dims must be even, got " + shape_str(s));
    Node n; n.op = Op::PolyPool; n.shape = {s[0], s[1], s[2], s[3] / 2, s[4] / 2}; n.in = {a};
    return push(std::move(n));
}

void Graph::set_input(int node, const Tensor& v) {
    check_exists(node);
    Node& n = at(node);
    if (n.op != Op::Input) throw GraphError("set_input on non-input node");
    if (!n.val.same_shape(v))
        throw GraphError("input '" + n.name + "' shape mismatch " + shape_str(n.val.shape()) +
                         " vs " + shape_str(v.shape()));
    n.val = v;
}

void Graph::eval(Node& n) {
    auto& nv = n.val;
    switch (n.op) {
        case Op::Leaf: {
            if (!n.bound->same_shape(nv))
                throw GraphError("leaf '" + n.name + "' storage changed shape");
            nv = *n.bound;
            break;
        }
        case Op::Input:
        case Op::Const:
            break;
        case Op::Add: {
            const Tensor& a = at(n.in[0]).val; const Tensor& b = at(n.in[1]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = a.flat(i) + b.flat(i);
            break;
        }
        case Op::Sub: {
            const Tensor& a = at(n.in[0]).val; const Tensor& b = at(n.in[1]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = a.flat(i) - b.flat(i);
            break;
        }
        case Op::Mul: {
            const Tensor& a = at(n.in[0]).val; const Tensor& b = at(n.in[1]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = a.flat(i) * b.flat(i);
            break;
        }
        case Op::Scale: {
            const Tensor& a = at(n.in[0]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = n.alpha * a.flat(i);
            break;
        }
        case Op::ScaleBy: {
            const Tensor& a = at(n.in[0]).val;
            const double s = at(n.in[1]).val.flat(0);
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = s * a.flat(i);
            break;
        }
        case Op::Contract: {
            const Tensor& a = at(n.in[0]).val; const Tensor& b = at(n.in[1]).val;
            const ContractPlan& p = n.plan;
            scratch_a_.resize(p.perm_a.size());
            scratch_b_.resize(p.perm_b.size());
            for (size_t i = 0; i < p.perm_a.size(); ++i) scratch_a_[i] = a.flat(p.perm_a[i]);
            for (size_t i = 0; i < p.perm_b.size(); ++i) scratch_b_[i] = b.flat(p.perm_b[i]);
            for (int64_t d = 0; d < p.D; ++d) {
                CMapMat A(scratch_a_.data() + d * p.M * p.K, p.M, p.K);
                CMapMat B(scratch_b_.data() + d * p.K * p.N, p.K, p.N);
                MapMat C(nv.data() + d * p.M * p.N, p.M, p.N);
                C.noalias() = A * B;
            }
            break;
        }
        case Op::Relu: {
            const Tensor& a = at(n.in[0]).val;
            // !(v <= 0) keeps NaN instead of squashing it to zero, so a
            // diverged forward pass stays visibly non-finite at the loss
            for (int64_t i = 0; i < nv.size(); ++i)
                nv.flat(i) = !(a.flat(i) <= 0.0) ? a.flat(i) : 0.0;
            break;
        }
        case Op::Exp: {
            const Tensor& a = at(n.in[0]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = std::exp(a.flat(i));
            break;
        }
        case Op::Square: {
            const Tensor& a = at(n.in[0]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = a.flat(i) * a.flat(i);
            break;
        }
        case Op::Sum: {
            const Tensor& a = at(n.in[0]).val;
            nv.fill(0.0);
            for (int64_t i = 0; i < a.size(); ++i) nv.flat(n.idx[static_cast<size_t>(i)]) += a.flat(i);
            break;
        }
        case Op::Gather:
        case Op::Permute: {
            const Tensor& a = at(n.in[0]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = a.flat(n.idx[static_cast<size_t>(i)]);
            break;
        }
        case Op::Reshape: {
            const Tensor& a = at(n.in[0]).val;
            for (int64_t i = 0; i < nv.size(); ++i) nv.flat(i) = a.flat(i);
            break;
        }
        case Op::LogSoftmax: {
            const Tensor& a = at(n.in[0]).val;
            const int64_t k = a.shape().back();
            const int64_t rows = a.size() / k;
            for (int64_t r = 0; r < rows; ++r) {
                const double* x = a.data() + r * k;
                double* y = nv.data() + r * k;
                double m = x[0];
                for (int64_t j = 1; j < k; ++j) m = std::max(m, x[j]);
                double lse = 0;
                for (int64_t j = 0; j < k; ++j) lse += std::exp(x[j] - m);
                lse = m + std::log(lse);
                for (int64_t j = 0; j < k; ++j) y[j] = x[j] - lse;
            }
            break;
        }
        case Op::PolyPool: {
            const Tensor& a = at(n.in[0]).val;
            const Shape& s = a.shape();
            const int64_t B = s[0], C = s[1], R = s[2], H = s[3], W = s[4];
            const int64_t Ho = H / 2, Wo = W / 2;
            n.chosen.assign(static_cast<size_t>(B), 0);
            n.pool_idx.assign(static_cast<size_t>(nv.size()), 0);
            n.tie_seen = false;
            for (int64_t b = 0; b < B; ++b) {
                double best = -1.0;
                int bestc = 0;
                bool tie = false;
                for (int comp = 0; comp < 4; ++comp) {
                    const int64_t pi = comp / 2, pj = comp % 2;
                    double norm = 0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t r = 0; r < R; ++r)
                            for (int64_t oh = 0; oh < Ho; ++oh)
                                for (int64_t ow = 0; ow < Wo; ++ow) {
                                    const double v = a.flat((((b * C + c) * R + r) * H + 2 * oh + pi) * W + 2 * ow + pj);
                                    const double av = std::fabs(v);
                                    if (av > norm) norm = av;
                                }
                    if (norm > best) { best = norm; bestc = comp; tie = false; }
                    else if (norm == best && comp > 0) tie = true;
                }
                n.chosen[static_cast<size_t>(b)] = bestc;
                if (tie) n.tie_seen = true;
                const int64_t pi = bestc / 2, pj = bestc % 2;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t r = 0; r < R; ++r)
                        for (int64_t oh = 0; oh < Ho; ++oh)
                            for (int64_t ow = 0; ow < Wo; ++ow) {
                                const int64_t src = (((b * C + c) * R + r) * H + 2 * oh + pi) * W + 2 * ow + pj;
                                const int64_t dst = (((b * C + c) * R + r) * Ho + oh) * Wo + ow;
                                n.pool_idx[static_cast<size_t>(dst)] = src;
                                nv.flat(dst) = a.flat(src);
                            }
            }
            break;
        }
    }
    nv.quantize();
}

void Graph::forward() {
    for (Node& n : nodes_) eval(n);
}

void Graph::back(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::Leaf:
        case Op::Input:
        case Op::Const:
            break;
        case Op::Add: {
            at(n.in[0]).grad.add_scaled(g, 1.0);
            at(n.in[1]).grad.add_scaled(g, 1.0);
            break;
        }
        case Op::Sub: {
            at(n.in[0]).grad.add_scaled(g, 1.0);
            at(n.in[1]).grad.add_scaled(g, -1.0);
            break;
        }
        case Op::Mul: {
            Tensor& ga = at(n.in[0]).grad; Tensor& gb = at(n.in[1]).grad;
            const Tensor& a = at(n.in[0]).val; const Tensor& b = at(n.in[1]).val;
            for (int64_t i = 0; i < g.size(); ++i) {
                ga.flat(i) += g.flat(i) * b.flat(i);
                gb.flat(i) += g.flat(i) * a.flat(i);
            }
            break;
        }
        case Op::Scale: {
            at(n.in[0]).grad.add_scaled(g, n.alpha);
            break;
        }
        case Op::ScaleBy: {
            Tensor& ga = at(n.in[0]).grad; Tensor& gs = at(n.in[1]).grad;
            const Tensor& a = at(n.in[0]).val;
            const double s = at(n.in[1]).val.flat(0);
            double acc = 0;
            for (int64_t i = 0; i < g.size(); ++i) {
                ga.flat(i) += g.flat(i) * s;
                acc += g.flat(i) * a.flat(i);
            }
            gs.flat(0) += acc;
            break;
        }
        case Op::Contract: {
            const ContractPlan& p = n.plan;
            // scratch_a_/scratch_b_ still hold the permuted operands of the last
            // forward; recompute them to stay correct if another node ran since.
            const Tensor& a = at(n.in[0]).val; const Tensor& b = at(n.in[1]).val;
            scratch_a_.resize(p.perm_a.size());
            scratch_b_.resize(p.perm_b.size());
            for (size_t i = 0; i < p.perm_a.size(); ++i) scratch_a_[i] = a.flat(p.perm_a[i]);
            for (size_t i = 0; i < p.perm_b.size(); ++i) scratch_b_[i] = b.flat(p.perm_b[i]);
            scratch_ga_.assign(p.perm_a.size(), 0.0);
            scratch_gb_.assign(p.perm_b.size(), 0.0);
            for (int64_t d = 0; d < p.D; ++d) {
                CMapMat A(scratch_a_.data() + d * p.M * p.K, p.M, p.K);
                CMapMat B(scratch_b_.data() + d * p.K * p.N, p.K, p.N);
                CMapMat G(g.data() + d * p.M * p.N, p.M, p.N);
                MapMat GA(scratch_ga_.data() + d * p.M * p.K, p.M, p.K);
                MapMat GB(scratch_gb_.data() + d * p.K * p.N, p.K, p.N);
                GA.noalias() = G * B.transpose();
                GB.noalias() = A.transpose() * G;
            }
            Tensor& ga = at(n.in[0]).grad; Tensor& gb = at(n.in[1]).grad;
            for (size_t i = 0; i < p.perm_a.size(); ++i) ga.flat(p.perm_a[i]) += scratch_ga_[i];
            for (size_t i = 0; i < p.perm_b.size(); ++i) gb.flat(p.perm_b[i]) += scratch_gb_[i];
            break;
        }
        case Op::Relu: {
            Tensor& ga = at(n.in[0]).grad;
            const Tensor& a = at(n.in[0]).val;
            for (int64_t i = 0; i < g.size(); ++i)
                if (a.flat(i) > 0) ga.flat(i) += g.flat(i);
            break;
        }
        case Op::Exp: {
            Tensor& ga = at(n.in[0]).grad;
            for (int64_t i = 0; i < g.size(); ++i) ga.flat(i) += g.flat(i) * n.val.flat(i);
            break;
        }
        case Op::Square: {
            Tensor& ga = at(n.in[0]).grad;
            const Tensor& a = at(n.in[0]).val;
            for (int64_t i = 0; i < g.size(); ++i) ga.flat(i) += 2.0 * a.flat(i) * g.flat(i);
            break;
        }
        case Op::Sum: {
            Tensor& ga = at(n.in[0]).grad;
            for (int64_t i = 0; i < ga.size(); ++i) ga.flat(i) += g.flat(n.idx[static_cast<size_t>(i)]);
            break;
        }
        case Op::Gather:
        case Op::Permute: {
            Tensor& ga = at(n.in[0]).grad;
            for (int64_t i = 0; i < g.size(); ++i) ga.flat(n.idx[static_cast<size_t>(i)]) += g.flat(i);
            break;
        }
        case Op::Reshape: {
            Tensor& ga = at(n.in[0]).grad;
            for (int64_t i = 0; i < g.size(); ++i) ga.flat(i) += g.flat(i);
            break;
        }
        case Op::LogSoftmax: {
            Tensor& ga = at(n.in[0]).grad;
            const int64_t k = n.val.shape().back();
            const int64_t rows = n.val.size() / k;
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = n.val.data() + r * k;
                const double* gr = g.data() + r * k;
                double gsum = 0;
                for (int64_t j = 0; j < k; ++j) gsum += gr[j];
                double* go = ga.data() + r * k;
                for (int64_t j = 0; j < k; ++j) go[j] += gr[j] - std::exp(y[j]) * gsum;
            }
            break;
        }
        case Op::PolyPool: {
            Tensor& ga = at(n.in[0]).grad;
            for (int64_t i = 0; i < g.size(); ++i) ga.flat(n.pool_idx[static_cast<size_t>(i)]) += g.flat(i);
            break;
        }
    }
}

void Graph::backward(int out, const Tensor& seed) {
    check_exists(out);
    if (!seed.same_shape(at(out).val))
        throw GraphError("backward: seed shape " + shape_str(seed.shape()) +
                         " does not match output shape " + shape_str(at(out).val.shape()));
    for (Node& n : nodes_) n.grad.fill(0.0);
    at(out).grad = seed;
    for (int i = out; i >= 0; --i) back(at(i));
}

std::vector<int> Graph::trainable_leaves() const {
    std::vector<int> ids;
    for (int i = 0; i < size(); ++i)
        if (nodes_[static_cast<size_t>(i)].op == Op::Leaf && nodes_[static_cast<size_t>(i)].trainable)
            ids.push_back(i);
    return ids;
}

GradientMap Graph::leaf_grads() const {
    GradientMap m;
    for (int i : trainable_leaves()) m[node(i).name] = node(i).grad;
    return m;
}

bool Graph::any_pool_tie() const {
    for (const Node& n : nodes_)
        if (n.op == Op::PolyPool && n.tie_seen) return true;
    return false;
}

}  // namespace symmetria
