#include "symmetria/laplace.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace symmetria {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kEigClamp = 1e-10;

std::vector<double> sym_eigenvalues(const Tensor& M) {
    const int64_t n = M.dim(0);
    Eigen::MatrixXd m(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) m(i, j) = M.flat(i * n + j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double v = es.eigenvalues()(i);
        out[static_cast<size_t>(i)] = v < kEigClamp ? 0.0 : v;
    }
    return out;
}

}  // namespace

std::vector<BlockSpectrum> block_spectra(const std::vector<CurvatureBlock>& curv,
                                         const PriorSet& priors) {
    std::vector<BlockSpectrum> out(priors.blocks.size());
    std::vector<int64_t> covered(priors.blocks.size(), 0);
    for (size_t b = 0; b < priors.blocks.size(); ++b) out[b].prior_block = static_cast<int>(b);

    for (const CurvatureBlock& cb : curv) {
        const int pb = priors.block_of(cb.param);
        if (cb.rows <= 0) throw LaplaceError("curvature block '" + cb.param + "' saw no data");
        const auto lam = sym_eigenvalues(cb.A);
        const auto mu = sym_eigenvalues(cb.B);
        const double inv = 1.0 / static_cast<double>(cb.rows);
        auto& prods = out[static_cast<size_t>(pb)].products;
        prods.reserve(prods.size() + lam.size() * mu.size());
        for (double l : lam)
            for (double m : mu) prods.push_back(l * m * inv);
        covered[static_cast<size_t>(pb)] += cb.D * cb.G;
    }
    for (size_t b = 0; b < priors.blocks.size(); ++b) {
        const int64_t zero = priors.blocks[b].P - covered[b];
        if (zero < 0)
            throw LaplaceError("curvature covers more dimensions than block '" +
                               priors.blocks[b].name + "' owns");
        out[b].zero_dims = zero;
    }
    return out;
}

MarglikParts marglik(double nll, const std::vector<PriorBlock>& blocks,
                     const std::vector<double>& rho, const std::vector<double>& vsq,
                     const std::vector<BlockSpectrum>& spectra) {
    if (rho.size() != blocks.size() || vsq.size() != blocks.size() || spectra.size() != blocks.size())
        throw LaplaceError("marglik: per-block vectors misaligned");
    MarglikParts mp;
    mp.nll = nll;
    int64_t Ptot = 0;
    for (size_t b = 0; b < blocks.size(); ++b) {
        const double r = rho[b], alpha = std::exp(r);
        const int64_t P = blocks[b].P;
        Ptot += P;
        mp.log_prior += 0.5 * static_cast<double>(P) * (r - kLog2Pi) - 0.5 * alpha * vsq[b];
        double hl = static_cast<double>(spectra[b].zero_dims) * r;  // log(0 + alpha) terms
        for (double h : spectra[b].products) hl += std::log(h + alpha);
        mp.half_logdet += 0.5 * hl;
    }
    mp.const_term = -0.5 * static_cast<double>(Ptot) * kLog2Pi;
    mp.total = mp.nll - mp.log_prior + mp.half_logdet + mp.const_term;
    return mp;
}

std::vector<double> marglik_hypergrad(const std::vector<PriorBlock>& blocks,
                                      const std::vector<double>& rho, const std::vector<double>& vsq,
                                      const std::vector<BlockSpectrum>& spectra) {
    if (rho.size() != blocks.size() || vsq.size() != blocks.size() || spectra.size() != blocks.size())
        throw LaplaceError("marglik_hypergrad: per-block vectors misaligned");
    std::vector<double> g(blocks.size(), 0.0);
    for (size_t b = 0; b < blocks.size(); ++b) {
        const double alpha = std::exp(rho[b]);
        double acc = 0.5 * alpha * vsq[b] - 0.5 * static_cast<double>(blocks[b].P);
        acc += 0.5 * static_cast<double>(spectra[b].zero_dims);  // alpha/(0+alpha)
        for (double h : spectra[b].products) acc += 0.5 * alpha / (h + alpha);
        g[b] = acc;
    }
    return g;
}

std::vector<double> effective_params(const std::vector<PriorBlock>& blocks,
                                     const std::vector<double>& rho,
                                     const std::vector<BlockSpectrum>& spectra) {
    if (rho.size() != blocks.size() || spectra.size() != blocks.size())
        throw LaplaceError("effective_params: per-block vectors misaligned");
    std::vector<double> g(blocks.size(), 0.0);
    for (size_t b = 0; b < blocks.size(); ++b) {
        const double alpha = std::exp(rho[b]);
        double acc = 0.0;
        for (double h : spectra[b].products) acc += h / (h + alpha);
        g[b] = acc;
    }
    return g;
}

double dense_half_logdet(const Tensor& H, double alpha) {
    const auto ev = sym_eigenvalues(H);
    double s = 0.0;
    for (double v : ev) s += std::log(v + alpha);
    return 0.5 * s;
}

double dense_gamma(const Tensor& H, double alpha) {
    const int64_t n = H.dim(0);
    Eigen::MatrixXd m(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) m(i, j) = H.flat(i * n + j);
    Eigen::MatrixXd shifted = m + alpha * Eigen::MatrixXd::Identity(n, n);
    const double tr = shifted.ldlt().solve(Eigen::MatrixXd::Identity(n, n)).trace();
    return static_cast<double>(n) - alpha * tr;
}

int argmax_share(const std::vector<double>& shares) {
    int best = 0;
    for (size_t i = 1; i < shares.size(); ++i)
        if (shares[i] > shares[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

SymmetryReport symmetry_report(const Network& net, const PriorSet& priors,
                               const std::vector<double>& rho,
                               const std::vector<BlockSpectrum>& spectra) {
    const auto gam = effective_params(priors.blocks, rho, spectra);
    SymmetryReport rep;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        if (net.layers[li].head) continue;
        LayerShare ls;
        ls.layer = static_cast<int>(li);
        for (size_t bi = 0; bi < net.layers[li].branches.size(); ++bi) {
            BranchShare bs;
            bs.kind = branch_kind_name(net.layers[li].branches[bi].kind);
            for (size_t pb = 0; pb < priors.blocks.size(); ++pb) {
                const PriorBlock& blk = priors.blocks[pb];
                if (blk.layer != static_cast<int>(li) || blk.branch != static_cast<int>(bi)) continue;
                bs.gamma += gam[pb];
                bs.P += blk.P;
                if (blk.learnable) bs.precision = std::exp(rho[pb]);
            }
            ls.branches.push_back(bs);
        }
        double denom = 0.0;
        for (const BranchShare& bs : ls.branches)
            denom += bs.P > 0 ? bs.gamma / static_cast<double>(bs.P) : 0.0;
        std::vector<double> shares;
        for (BranchShare& bs : ls.branches) {
            bs.share = denom > 0 && bs.P > 0 ? (bs.gamma / static_cast<double>(bs.P)) / denom : 0.0;
            shares.push_back(bs.share);
        }
        ls.dominant = argmax_share(shares);
        rep.layers.push_back(std::move(ls));
    }
    return rep;
}

}  // namespace symmetria
