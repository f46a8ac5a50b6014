#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "symmetria/checks.hpp"
#include "symmetria/laplace.hpp"
#include "symmetria/rng.hpp"

using namespace symmetria;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Tensor randn(Shape s, uint64_t seed) {
    Tensor t(std::move(s));
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.flat(i) = rng.normal();
    return t;
}

}  // namespace

TEST_SUITE("laplace") {

TEST_CASE("frozen single-block objective") {
    std::vector<PriorBlock> blocks(1);
    blocks[0].name = "B";
    blocks[0].P = 1;
    std::vector<BlockSpectrum> spectra(1);
    spectra[0].prior_block = 0;
    spectra[0].products = {1.0};
    spectra[0].zero_dims = 0;
    const std::vector<double> rho{0.0}, vsq{4.0};

    const MarglikParts mp = marglik(7.0, blocks, rho, vsq, spectra);
    CHECK(mp.nll == 7.0);
    CHECK(mp.log_prior == doctest::Approx(-0.5 * kLog2Pi - 2.0).epsilon(1e-14));
    CHECK(mp.half_logdet == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
    CHECK(mp.const_term == doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-14));
    CHECK(mp.total == doctest::Approx(9.0 + 0.5 * std::log(2.0)).epsilon(1e-14));

    const auto hg = marglik_hypergrad(blocks, rho, vsq, spectra);
    REQUIRE(hg.size() == 1);
    CHECK(hg[0] == doctest::Approx(1.75).epsilon(1e-14));
}

TEST_CASE("effective parameter oracles and limits") {
    std::vector<PriorBlock> blocks(1);
    blocks[0].P = 2;
    std::vector<BlockSpectrum> spectra(1);
    spectra[0].products = {2.0, 6.0};
    CHECK(effective_params(blocks, {std::log(2.0)}, spectra)[0] ==
          doctest::Approx(1.25).epsilon(1e-14));

    blocks[0].P = 5;
    spectra[0].products = {1, 2, 3, 4, 5};
    CHECK(std::abs(effective_params(blocks, {-40.0}, spectra)[0] - 5.0) < 1e-9);
    CHECK(effective_params(blocks, {40.0}, spectra)[0] < 1e-9);
}

TEST_CASE("dense closed-form oracles") {
    const Tensor h = Tensor::from({1, 1}, {3.0});
    CHECK(dense_half_logdet(h, 2.0) == doctest::Approx(0.5 * std::log(5.0)).epsilon(1e-14));
    CHECK(dense_gamma(h, 2.0) == doctest::Approx(0.6).epsilon(1e-14));
}

TEST_CASE("spectra cover curvature dims and count prior-only dims") {
    Network net = single_branch_net(BranchKind::SCONV, 1, 2, 4, 3, 8);
    const PriorSet ps = PriorSet::build(net, PriorConfig{});
    const auto curv = kfac_blocks(net, randn({3, 1, 4, 4}, 9), 128);
    const auto spectra = block_spectra(curv, ps);
    REQUIRE(spectra.size() == ps.blocks.size());
    REQUIRE(ps.blocks[0].name == "L0.SCONV");
    CHECK(ps.blocks[0].P == 21);  // u 2x1x5, z 5x2, omega
    CHECK(spectra[0].products.size() == 10);
    CHECK(spectra[0].zero_dims == 11);
    for (size_t b = 1; b < spectra.size(); ++b) {
        CHECK(spectra[b].zero_dims == 0);
        CHECK(static_cast<int64_t>(spectra[b].products.size()) == ps.blocks[b].P);
    }
}

TEST_CASE("kronecker eigen-products match the dense spectrum") {
    Network net = single_branch_net(BranchKind::FC, 1, 2, 3, 2, 10);
    const PriorSet ps = PriorSet::build(net, PriorConfig{});
    const auto curv = kfac_blocks(net, randn({4, 1, 3, 3}, 11), 128);
    const auto spectra = block_spectra(curv, ps);
    for (const auto& cb : curv) {
        CAPTURE(cb.param);
        const Tensor f = expand_kronecker(cb);
        const int64_t P = f.dim(0);
        Eigen::MatrixXd m(P, P);
        for (int64_t i = 0; i < P; ++i)
            for (int64_t j = 0; j < P; ++j) m(i, j) = f.at({i, j});
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
        std::vector<double> dense(es.eigenvalues().data(), es.eigenvalues().data() + P);
        auto prods = spectra[static_cast<size_t>(ps.block_of(cb.param))].products;
        REQUIRE(static_cast<int64_t>(prods.size()) == P);
        std::sort(dense.begin(), dense.end());
        std::sort(prods.begin(), prods.end());
        double scale = std::max(1.0, std::abs(dense.back()));
        for (int64_t i = 0; i < P; ++i)
            CHECK(std::abs(dense[static_cast<size_t>(i)] - prods[static_cast<size_t>(i)]) <
                  1e-9 * scale);
    }
}

TEST_CASE("symmetry report follows the precision ordering") {
    ArchConfig ac;
    ac.alpha = 2;
    ac.spatial = 4;
    ac.in_channels = 1;
    ac.classes = 3;
    ac.menus = {{BranchKind::FC, BranchKind::CONV}};
    Network net = build_architecture(ac);
    net.init_params(12);
    const PriorSet ps = PriorSet::build(net, PriorConfig{});
    const auto curv = kfac_blocks(net, randn({6, 1, 4, 4}, 13), 128);
    const auto spectra = block_spectra(curv, ps);

    std::vector<double> rho(ps.blocks.size(), 0.0);
    for (size_t b = 0; b < ps.blocks.size(); ++b) {
        const PriorBlock& pb = ps.blocks[b];
        if (pb.layer > 2) continue;  // heads
        const bool fc = pb.name.find("FC") != std::string::npos;
        const bool flip = pb.layer == 2;
        rho[b] = (fc != flip) ? 12.0 : -2.0;
    }
    const SymmetryReport rep = symmetry_report(net, ps, rho, spectra);
    REQUIRE(rep.layers.size() == 3);
    const int want[3] = {1, 1, 0};  // CONV, CONV, FC in menu order
    for (int l = 0; l < 3; ++l) {
        CAPTURE(l);
        const LayerShare& ls = rep.layers[static_cast<size_t>(l)];
        REQUIRE(ls.branches.size() == 2);
        CHECK(ls.dominant == want[l]);
        double sum = 0;
        for (const auto& bs : ls.branches) sum += bs.share;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        for (size_t j = 0; j < ls.branches.size(); ++j) {
            const int bi = ps.block_of(net.param_name(l, static_cast<int>(j), "w"));
            CHECK(ls.branches[j].precision ==
                  doctest::Approx(std::exp(rho[static_cast<size_t>(bi)])).epsilon(1e-12));
        }
    }
}

TEST_CASE("share-table classification fixture") {
    // relative effective-dimension shares of (dense, conv) branches from a
    // converged translation-task run; the dense branch wins only in the
    // pooled stage next to the classifier head
    const double fixture[8][2] = {
        {0.00000003, 0.99999997}, {0.00000010, 0.99999990}, {0.00000021, 0.99999979},
        {0.00000178, 0.99999822}, {0.00001888, 0.99998112}, {0.00002643, 0.99997357},
        {0.99927627, 0.00072373}, {0.00001874, 0.99998126},
    };
    for (int l = 0; l < 8; ++l) {
        CAPTURE(l);
        CHECK(fixture[l][0] + fixture[l][1] == doctest::Approx(1.0).epsilon(1e-6));
        const int dom = argmax_share({fixture[l][0], fixture[l][1]});
        CHECK(dom == (l == 6 ? 0 : 1));
    }
}

TEST_CASE("marginal-likelihood verification suite") {
    const auto rows = check_marglik(0);
    if (!all_pass(rows)) {
        std::puts(render_check_table(rows).c_str());
    }
    CHECK(all_pass(rows));
}

}  // TEST_SUITE
