#pragma once
// Reverse-mode autodiff over a flat tape of dense-tensor ops. Node insertion
// order is topological by construction (ops only reference earlier nodes), so
// forward() is a single in-order sweep and backward() a single reverse sweep.
// Values and gradients live in preallocated per-node tensors; gradients of
// interior nodes stay readable after backward (the curvature code reads them).
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "symmetria/tensor.hpp"

namespace symmetria {

using GradientMap = std::map<std::string, Tensor>;

enum class Op {
    Leaf,        // named parameter, bound to external storage
    Input,       // named batch input, set before forward
    Const,       // fixed tensor baked into the graph
    Add, Sub, Mul,
    Scale,       // y = alpha * x, alpha compile-time constant
    ScaleBy,     // y = s[0] * x, s a one-element tensor node (trainable scalars)
    Contract,    // generalised tensor contraction with optional batched axes
    Relu, Exp, Square,
    Sum,         // reduce-sum over a set of axes
    Gather,      // y.flat[i] = x.flat[idx[i]] with a static index table
    Permute,     // axis permutation (special-cased gather)
    Reshape,
    LogSoftmax,  // over the last axis
    PolyPool,    // polyphase max-norm component selection, B x C x R x H x W
};

struct ContractPlan {
    std::vector<std::pair<int, int>> sum_pairs, keep_pairs;
    std::vector<int64_t> perm_a, perm_b;  // mat.flat[i] = src.flat[perm[i]]
    int64_t D = 1, M = 1, K = 1, N = 1;   // keep, rows(a), contracted, cols(b)
};

struct Node {
    Op op;
    Shape shape;
    std::vector<int> in;
    Tensor val, grad;

    std::string name;            // Leaf / Input
    bool trainable = false;      // Leaf
    const Tensor* bound = nullptr;  // Leaf external storage
    double alpha = 0.0;          // Scale
    std::vector<int> axes;       // Sum / Permute
    std::vector<int64_t> idx;    // Gather / Permute map / Sum reduce map
    ContractPlan plan;           // Contract

    // PolyPool per-forward state
    std::vector<int32_t> chosen;      // selected component per sample
    std::vector<int64_t> pool_idx;    // gather map for the last forward
    bool tie_seen = false;
};

class Graph {
public:
    int leaf(const std::string& name, const Tensor* storage, bool trainable = true);
    int input(const std::string& name, Shape shape);
    int constant(Tensor value);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int a, double alpha);
    int scale_by(int a, int s);
    int contract(int a, int b, std::vector<std::pair<int, int>> sum_pairs,
                 std::vector<std::pair<int, int>> keep_pairs = {});
    int relu(int a);
    int exp_(int a);
    int square(int a);
    int sum(int a, std::vector<int> axes);
    int gather(int a, std::vector<int64_t> idx, Shape out_shape);
    int permute(int a, std::vector<int> axes);
    int reshape(int a, Shape shape);
    int log_softmax(int a);
    int polyphase_pool(int a);

    void set_input(int node, const Tensor& v);
    void forward();
    void backward(int out, const Tensor& seed);  // zeroes all grads first

    const Tensor& value(int n) const { return nodes_[static_cast<size_t>(n)].val; }
    const Tensor& grad(int n) const { return nodes_[static_cast<size_t>(n)].grad; }
    const Node& node(int n) const { return nodes_[static_cast<size_t>(n)]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    std::vector<int> trainable_leaves() const;
    GradientMap leaf_grads() const;  // gradients of all trainable leaves by name

    // last-forward polyphase diagnostics (equivariance suite rejects tied inputs)
    bool any_pool_tie() const;

    void set_precision(Precision p) { prec_ = p; }

private:
    int push(Node n);
    Node& at(int n) { return nodes_[static_cast<size_t>(n)]; }
    void check_exists(int n) const;
    void eval(Node& n);
    void back(Node& n);

    std::vector<Node> nodes_;
    Precision prec_ = Precision::Real64;
    // contraction scratch (permuted operand copies), reused across nodes
    std::vector<double> scratch_a_, scratch_b_, scratch_ga_, scratch_gb_;
};

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// index-map helper shared with layer builders: flat indices of transposing
// `shape` by `order` (result[i] = source flat index of i-th transposed element)
std::vector<int64_t> transpose_map(const Shape& shape, const std::vector<int>& order);

}  // namespace symmetria
