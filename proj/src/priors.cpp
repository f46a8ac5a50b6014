#include "symmetria/priors.hpp"

#include <cmath>
#include <set>

namespace symmetria {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

std::string placement_name(PriorPlacement p) {
    switch (p) {
        case PriorPlacement::OnWeights: return "weights";
        case PriorPlacement::OnAnchorValues: return "anchor_values";
        case PriorPlacement::OnLengthscales: return "lengthscales";
    }
    throw PriorError("unknown placement");
}

PriorPlacement placement_from(const std::string& s) {
    if (s == "weights") return PriorPlacement::OnWeights;
    if (s == "anchor_values") return PriorPlacement::OnAnchorValues;
    if (s == "lengthscales") return PriorPlacement::OnLengthscales;
    throw PriorError("unknown prior placement '" + s + "'");
}

std::string PriorBlock::csv_name() const {
    std::string out = "rho_";
    for (char c : name) out.push_back(c == '.' ? '_' : c);
    return out;
}

PriorSet PriorSet::build(const Network& net, const PriorConfig& cfg) {
    PriorSet ps;
    const double rho0 = -2.0 * std::log(cfg.sigma_init);
    std::set<std::string> covered;
    for (size_t li = 0; li < net.layers.size(); ++li)
        for (size_t bi = 0; bi < net.layers[li].branches.size(); ++bi) {
            const BranchSpec& sp = net.layers[li].branches[bi];
            const bool rbf = sp.kind == BranchKind::SCONV || sp.kind == BranchKind::SFC;
            const std::string base = "L" + std::to_string(li) + "." + branch_kind_name(sp.kind);
            auto plans = branch_tensors(sp);

            auto push_block = [&](const std::string& name, PriorPlacement pl, bool learnable,
                                  double rho, auto filter) {
                PriorBlock b;
                b.name = name;
                b.layer = static_cast<int>(li);
                b.branch = static_cast<int>(bi);
                b.placement = pl;
                b.rho = rho;
                b.learnable = learnable;
                for (const TensorPlan& tp : plans)
                    if (tp.trainable && filter(tp.tensor)) {
                        b.governed.push_back(net.param_name(static_cast<int>(li), static_cast<int>(bi), tp.tensor));
                        b.P += numel(tp.shape);
                        covered.insert(b.governed.back());
                    }
                if (!b.governed.empty()) ps.blocks.push_back(std::move(b));
            };

            if (!rbf) {
                push_block(base, PriorPlacement::OnWeights, true, rho0,
                           [](const std::string&) { return true; });
            } else if (cfg.s_placement == PriorPlacement::OnLengthscales) {
                push_block(base + ".ls", PriorPlacement::OnLengthscales, true, rho0,
                           [](const std::string& t) { return t.rfind("omega", 0) == 0; });
                // companion: fixed unit-variance prior over the anchor system
                push_block(base + ".values", PriorPlacement::OnAnchorValues, false, 0.0,
                           [](const std::string& t) { return t.rfind("omega", 0) != 0; });
            } else {
                // OnWeights on an RBF branch means the same thing as OnAnchorValues:
                // the weights are a deterministic function of (u, z, omega)
                push_block(base, PriorPlacement::OnAnchorValues, true, rho0,
                           [](const std::string&) { return true; });
            }
        }

    // coverage: every trainable parameter governed by exactly one block
    int64_t total = 0;
    size_t names = 0;
    for (const PriorBlock& b : ps.blocks) {
        total += b.P;
        names += b.governed.size();
    }
    if (total != net.param_count() || covered.size() != names)
        throw PriorError("prior blocks do not partition the trainable parameters");
    return ps;
}

int PriorSet::block_of(const std::string& param) const {
    for (size_t i = 0; i < blocks.size(); ++i)
        for (const std::string& g : blocks[i].governed)
            if (g == param) return static_cast<int>(i);
    throw PriorError("parameter '" + param + "' is not governed by any prior block");
}

std::vector<double> PriorSet::block_sq_norms(const ParamStore& params) const {
    std::vector<double> out;
    out.reserve(blocks.size());
    for (const PriorBlock& b : blocks) {
        double s = 0.0;
        for (const std::string& g : b.governed) s += params.at(g).squared_norm();
        out.push_back(s);
    }
    return out;
}

double PriorSet::log_prior(const ParamStore& params) const {
    const auto vsq = block_sq_norms(params);
    double lp = 0.0;
    for (size_t i = 0; i < blocks.size(); ++i) {
        const PriorBlock& b = blocks[i];
        lp += 0.5 * static_cast<double>(b.P) * (b.rho - kLog2Pi) - 0.5 * std::exp(b.rho) * vsq[i];
    }
    return lp;
}

void PriorSet::add_neg_log_prior_grad(const ParamStore& params, GradientMap& grads) const {
    for (const PriorBlock& b : blocks) {
        const double prec = std::exp(b.rho);
        for (const std::string& g : b.governed) {
            const Tensor& v = params.at(g);
            auto it = grads.find(g);
            if (it == grads.end()) it = grads.emplace(g, Tensor::zeros(v.shape())).first;
            it->second.add_scaled(v, prec);
        }
    }
}

std::vector<int> PriorSet::learnable_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].learnable) out.push_back(static_cast<int>(i));
    return out;
}

}  // namespace symmetria
