#include <cmath>
#include <vector>

#include "doctest.h"
#include "symmetria/checks.hpp"
#include "symmetria/groups.hpp"
#include "symmetria/layers.hpp"
#include "symmetria/rng.hpp"

using namespace symmetria;

namespace {

Tensor randn(Shape s, uint64_t seed) {
    Tensor t(std::move(s));
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.flat(i) = rng.normal();
    return t;
}

double max_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat(i) - b.flat(i)));
    return m;
}

Tensor lift4(const Tensor& x) {  // (B,C,1,H,W) -> (B,C,4,H,W), slices replicated
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(3), W = x.dim(4);
    Tensor y({B, C, 4, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t r = 0; r < 4; ++r)
                for (int64_t p = 0; p < H * W; ++p)
                    y.flat(((b * C + c) * 4 + r) * H * W + p) = x.flat((b * C + c) * H * W + p);
    return y;
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("fc_forward all-ones oracle") {
    const Tensor theta = Tensor::full({1, 1, 2, 2, 2, 2}, 1.0);
    const Tensor x = Tensor::full({1, 1, 2, 2}, 1.0);
    const Tensor y = fc_forward(theta, x);
    REQUIRE(y.size() == 4);
    for (int64_t i = 0; i < 4; ++i) CHECK(y.flat(i) == 4.0);
}

TEST_CASE("conv_forward 1x1 doubling and centre-delta identity") {
    const Tensor x = randn({1, 1, 3, 3}, 5);
    const Tensor w1 = Tensor::full({1, 1, 1, 1}, 2.0);
    const Tensor y1 = conv_forward(w1, x);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y1.flat(i) == doctest::Approx(2 * x.flat(i)).epsilon(1e-15));

    Tensor wd = Tensor::zeros({1, 1, 3, 3});
    wd.at({0, 0, 1, 1}) = 1.0;  // centre offset
    const Tensor yd = conv_forward(wd, x);
    CHECK(max_diff(yd, x) < 1e-15);
}

TEST_CASE("zero parameters give zero outputs for every branch map") {
    const Tensor x = randn({1, 2, 4, 4}, 7);
    CHECK(fc_forward(Tensor::zeros({2, 2, 4, 4, 4, 4}), x).max_abs() == 0.0);
    CHECK(conv_forward(Tensor::zeros({2, 2, 3, 3}), x).max_abs() == 0.0);
    CHECK(ffc_forward(Tensor::zeros({2, 2, 4, 4}), Tensor::zeros({2, 2, 4, 4}), x).max_abs() == 0.0);
}

TEST_CASE("ffc constant input sums spatially") {
    const Tensor t1 = Tensor::full({1, 1, 2, 2}, 1.0);
    const Tensor t2 = Tensor::full({1, 1, 2, 2}, 1.0);
    const Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    const Tensor y = ffc_forward(t1, t2, x);
    for (int64_t i = 0; i < 4; ++i) CHECK(y.flat(i) == 10.0);
}

TEST_CASE("ffc equals fc with a rank-one spatial weight") {
    const Tensor t1 = randn({2, 3, 4, 4}, 11);
    const Tensor t2 = randn({2, 3, 4, 4}, 13);
    const Tensor x = randn({2, 3, 4, 4}, 17);
    Tensor theta({2, 3, 4, 4, 4, 4});
    const int64_t P = 16;
    for (int64_t co = 0; co < 2; ++co)
        for (int64_t ci = 0; ci < 3; ++ci)
            for (int64_t pp = 0; pp < P; ++pp)
                for (int64_t q = 0; q < P; ++q)
                    theta.flat(((co * 3 + ci) * P + pp) * P + q) =
                        t1.flat((co * 3 + ci) * P + pp) * t2.flat((co * 3 + ci) * P + q);
    CHECK(max_diff(ffc_forward(t1, t2, x), fc_forward(theta, x)) < 1e-12);
}

TEST_CASE("rbf materialisation oracles") {
    const auto dom1 = offset_domain(1);
    REQUIRE(dom1.size() == 1);
    CHECK(dom1[0][0] == 0.0);
    CHECK(dom1[0][1] == 0.0);
    const Tensor u = Tensor::full({1, 1, 1}, 2.0);
    const Tensor z = Tensor::zeros({1, 2});
    const Tensor f = materialize_filter(u, z, 1.0, dom1);
    CHECK(f.flat(0) == doctest::Approx(2.0).epsilon(1e-15));

    const auto dom3 = offset_domain(3);
    REQUIRE(dom3.size() == 9);
    int centre = -1, right = -1;
    for (int i = 0; i < 9; ++i) {
        if (dom3[static_cast<size_t>(i)][0] == 0 && dom3[static_cast<size_t>(i)][1] == 0) centre = i;
        if (dom3[static_cast<size_t>(i)][0] == 1 && dom3[static_cast<size_t>(i)][1] == 0) right = i;
    }
    REQUIRE(centre >= 0);
    REQUIRE(right >= 0);
    const Tensor u1 = Tensor::full({1, 1, 1}, 1.0);
    const Tensor f3 = materialize_filter(u1, z, 1.0, dom3);
    CHECK(f3.flat(centre) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(f3.flat(right) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    // omega = 0 flattens the basis: every position sums the anchor values
    const Tensor u2 = Tensor::from({1, 1, 2}, {1.5, 2.5});
    const Tensor z2 = randn({2, 2}, 19);
    const Tensor f0 = materialize_filter(u2, z2, 0.0, dom3);
    for (int64_t i = 0; i < 9; ++i) CHECK(f0.flat(i) == doctest::Approx(4.0).epsilon(1e-12));

    CHECK(grid_domain(2, 3).size() == 6);
}

TEST_CASE("sconv equals conv with the materialised filter") {
    const Tensor u = randn({2, 2, 5}, 23);
    const Tensor z = randn({5, 2}, 29);
    const Tensor x = randn({1, 2, 4, 4}, 31);
    const double omega = 0.8;
    const Tensor filt = materialize_filter(u, z, omega, offset_domain(3)).reshaped({2, 2, 3, 3});
    CHECK(max_diff(sconv_forward(u, z, omega, 3, x), conv_forward(filt, x)) < 1e-12);
}

TEST_CASE("sfc equals fc with the two materialised factors") {
    const int64_t P = 16;
    const Tensor u1 = randn({2, 2, 8}, 37), u2 = randn({2, 2, 8}, 41);
    const Tensor z1 = randn({8, 2}, 43), z2 = randn({8, 2}, 47);
    const Tensor x = randn({1, 2, 4, 4}, 53);
    const double o1 = 0.5, o2 = 0.9;
    const auto dom = grid_domain(4, 4);
    const Tensor s1 = materialize_filter(u1, z1, o1, dom);
    const Tensor s2 = materialize_filter(u2, z2, o2, dom);
    Tensor theta({2, 2, 4, 4, 4, 4});
    for (int64_t co = 0; co < 2; ++co)
        for (int64_t ci = 0; ci < 2; ++ci)
            for (int64_t pp = 0; pp < P; ++pp)
                for (int64_t q = 0; q < P; ++q)
                    theta.flat(((co * 2 + ci) * P + pp) * P + q) =
                        s1.flat((co * 2 + ci) * P + pp) * s2.flat((co * 2 + ci) * P + q);
    CHECK(max_diff(sfc_forward(u1, z1, o1, u2, z2, o2, x), fc_forward(theta, x)) < 1e-12);
}

TEST_CASE("gconv 1x1 filters make all rotation slices equal") {
    const GridGroup& p4 = build_p4(4, 4);
    const Tensor w = randn({2, 2, 1, 1, 1}, 59);
    const Tensor x = randn({1, 2, 1, 4, 4}, 61);
    const Tensor y = gconv_forward(w, x, p4);
    REQUIRE(y.dim(2) == 4);
    for (int64_t r = 1; r < 4; ++r)
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t p = 0; p < 16; ++p)
                CHECK(y.flat((c * 4 + r) * 16 + p) == doctest::Approx(y.flat(c * 4 * 16 + p)).epsilon(1e-14));
}

TEST_CASE("gconv function-level equivariance") {
    const GridGroup p4 = build_p4(4, 4);
    SUBCASE("lifted input") {
        const Tensor w = randn({2, 2, 1, 3, 3}, 67);
        const Tensor x = randn({1, 2, 1, 4, 4}, 71);
        const Tensor y = gconv_forward(w, x, p4);
        Rng rng(73);
        for (int t = 0; t < 6; ++t) {
            const int g = static_cast<int>(rng.uniform_int(p4.group.order));
            const Tensor lhs = gconv_forward(w, act(p4, g, x), p4);
            const Tensor rhs = act(p4, g, y);
            CHECK(max_diff(lhs, rhs) < 1e-12);
        }
    }
    SUBCASE("group-feature input") {
        const Tensor w = randn({2, 2, 4, 3, 3}, 79);
        const Tensor x = randn({1, 2, 4, 4, 4}, 83);
        const Tensor y = gconv_forward(w, x, p4);
        Rng rng(89);
        for (int t = 0; t < 6; ++t) {
            const int g = static_cast<int>(rng.uniform_int(p4.group.order));
            CHECK(max_diff(gconv_forward(w, act(p4, g, x), p4), act(p4, g, y)) < 1e-12);
        }
    }
}

TEST_CASE("pgconv function-level equivariance") {
    const GridGroup p4 = build_p4(4, 4);
    const Tensor w = randn({2, 2, 3, 3}, 97);
    const Tensor x = randn({1, 2, 4, 4, 4}, 101);
    const Tensor y = pgconv_forward(w, x, p4);
    Rng rng(103);
    for (int t = 0; t < 6; ++t) {
        const int g = static_cast<int>(rng.uniform_int(p4.group.order));
        CHECK(max_diff(pgconv_forward(w, act(p4, g, x), p4), act(p4, g, y)) < 1e-12);
    }
}

TEST_CASE("polyphase pool oracles") {
    bool tie = false;
    int comp = -1;
    const Tensor x = Tensor::from({1, 1, 1, 2, 2}, {1, 2, 3, 4});
    const Tensor y = polyphase_pool(x, &tie, &comp);
    REQUIRE(y.size() == 1);
    CHECK(y.flat(0) == 4.0);
    CHECK_FALSE(tie);

    const Tensor e = Tensor::full({1, 1, 1, 2, 2}, 7.0);
    const Tensor ye = polyphase_pool(e, &tie, &comp);
    CHECK(ye.flat(0) == 7.0);
    CHECK(tie);
    CHECK(comp == 0);
}

TEST_CASE("polyphase pool commutes with rotations and even shifts") {
    const GridGroup p4f = build_p4(4, 4);
    const GridGroup p4c = build_p4(2, 2);
    const Tensor x = randn({1, 2, 1, 4, 4}, 107);
    const Tensor px = polyphase_pool(x);
    for (int s = 1; s < 4; ++s) {
        const Tensor lhs = polyphase_pool(act(p4f, p4f.element(s, 0, 0), x));
        const Tensor rhs = act(p4c, p4c.element(s, 0, 0), px);
        CHECK(max_diff(lhs, rhs) == 0.0);
    }
    const Tensor lhs = polyphase_pool(act(p4f, p4f.element(0, 2, 0), x));
    const Tensor rhs = act(p4c, p4c.element(0, 1, 0), px);
    CHECK(max_diff(lhs, rhs) == 0.0);
}

TEST_CASE("graph branches match the direct forward implementations") {
    for (BranchKind kind : {BranchKind::FC, BranchKind::FFC, BranchKind::SFC, BranchKind::CONV,
                            BranchKind::SCONV, BranchKind::GCONV, BranchKind::PGCONV}) {
        CAPTURE(branch_kind_name(kind));
        Network net = single_branch_net(kind, 2, 2, 4, 3, 1234 + static_cast<uint64_t>(kind));
        BuiltNet bt = net.build(2);
        const Tensor x5 = randn({2, 2, 1, 4, 4}, 7777 + static_cast<uint64_t>(kind));
        bt.g.set_input(bt.input, x5);
        bt.g.set_input(bt.onehot, Tensor::zeros({2, 3}));
        bt.g.forward();
        const Tensor got = bt.g.value(bt.layers[0].branches[0].out);
        auto P = [&](const char* t) { return net.params.at(net.param_name(0, 0, t)); };
        Tensor want;
        const Tensor x4 = x5.reshaped({2, 2, 4, 4});
        switch (kind) {
            case BranchKind::FC: want = fc_forward(P("w"), x4).reshaped(got.shape()); break;
            case BranchKind::FFC:
                want = ffc_forward(P("t1"), P("t2"), x4).reshaped(got.shape());
                break;
            case BranchKind::SFC:
                want = sfc_forward(P("u1"), P("z1"), P("omega1").flat(0), P("u2"), P("z2"),
                                   P("omega2").flat(0), x4)
                           .reshaped(got.shape());
                break;
            case BranchKind::CONV: want = conv_forward(P("w"), x4).reshaped(got.shape()); break;
            case BranchKind::SCONV:
                want = sconv_forward(P("u"), P("z"), P("omega").flat(0), 3, x4).reshaped(got.shape());
                break;
            case BranchKind::GCONV: want = gconv_forward(P("w"), lift4(x5), net.p4_at(4)); break;
            case BranchKind::PGCONV: want = pgconv_forward(P("w"), lift4(x5), net.p4_at(4)); break;
        }
        CHECK(max_diff(got, want) < 1e-12);
    }
}

TEST_CASE("group nets lift the input by replication") {
    Network net = single_branch_net(BranchKind::GCONV, 2, 2, 4, 3, 55);
    BuiltNet bt = net.build(1);
    const Tensor x5 = randn({1, 2, 1, 4, 4}, 66);
    bt.g.set_input(bt.input, x5);
    bt.g.set_input(bt.onehot, Tensor::zeros({1, 3}));
    bt.g.forward();
    CHECK(max_diff(bt.g.value(bt.layers[0].in), lift4(x5)) == 0.0);
}

TEST_CASE("branch param_count agrees with the stored tensors") {
    for (BranchKind kind : {BranchKind::FC, BranchKind::FFC, BranchKind::SFC, BranchKind::CONV,
                            BranchKind::SCONV, BranchKind::GCONV, BranchKind::PGCONV}) {
        BranchSpec sp;
        sp.kind = kind;
        sp.C_in = 2;
        sp.C_out = 3;
        sp.H = sp.W = 4;
        sp.R = (kind == BranchKind::GCONV || kind == BranchKind::PGCONV) ? 4 : 1;
        sp.S = 3;
        sp.M1 = 5;
        sp.M2 = 6;
        int64_t total = 0;
        for (const auto& tp : branch_tensors(sp)) total += numel(tp.shape);
        CHECK(sp.param_count() == total);
    }
}

TEST_CASE("pathway_layer_count and the widening cascade") {
    CHECK(pathway_layer_count(12) == 5);
    CHECK(pathway_layer_count(4) == 3);
    CHECK(pathway_layer_count(3) == 2);
    CHECK_THROWS_AS(pathway_layer_count(2), LayerError);

    ArchConfig ac;
    ac.alpha = 4;
    ac.spatial = 12;
    ac.in_channels = 1;
    ac.classes = 4;
    ac.filter_size = 5;
    ac.menus = {{BranchKind::FC, BranchKind::CONV}};
    Network net = build_architecture(ac);
    CHECK(net.R == 1);
    REQUIRE(net.layers.size() == 7);

    const int cin[5] = {1, 4, 8, 8, 16};
    const int cout[5] = {4, 8, 8, 16, 16};
    const int hh[5] = {12, 12, 6, 6, 3};
    const bool pool[5] = {false, true, false, true, false};
    for (int l = 0; l < 5; ++l) {
        CAPTURE(l);
        CHECK(net.layers[static_cast<size_t>(l)].C_in == cin[l]);
        CHECK(net.layers[static_cast<size_t>(l)].C_out == cout[l]);
        CHECK(net.layers[static_cast<size_t>(l)].H == hh[l]);
        CHECK(net.layers[static_cast<size_t>(l)].pool == pool[l]);
        CHECK_FALSE(net.layers[static_cast<size_t>(l)].head);
        REQUIRE(net.layers[static_cast<size_t>(l)].branches.size() == 2);
        // full-support tail layer uses the remaining odd extent as its filter
        const int wantS = (l == 4) ? 3 : 5;
        CHECK(net.layers[static_cast<size_t>(l)].branches[1].S == wantS);
    }
    CHECK(net.layers[5].head);
    CHECK(net.layers[5].C_in == 16);
    CHECK(net.layers[5].C_out == 64);
    CHECK(net.layers[5].relu);
    CHECK(net.layers[6].head);
    CHECK(net.layers[6].C_out == 4);
    CHECK_FALSE(net.layers[6].relu);

    ArchConfig gc = ac;
    gc.menus = {{BranchKind::FC, BranchKind::GCONV}};
    CHECK(build_architecture(gc).R == 4);
}

TEST_CASE("stationary menus pick the documented anchor counts") {
    ArchConfig ac;
    ac.alpha = 2;
    ac.spatial = 4;
    ac.in_channels = 1;
    ac.classes = 3;
    ac.filter_size = 3;
    ac.menus = {{BranchKind::SCONV, BranchKind::SFC}};
    Network net = build_architecture(ac);
    for (size_t l = 0; l < net.layers.size(); ++l) {
        if (net.layers[l].head) continue;
        const int H = net.layers[l].H;
        for (const auto& sp : net.layers[l].branches) {
            if (sp.kind == BranchKind::SCONV) CHECK(sp.M1 == (sp.S * sp.S + 1) / 2);
            if (sp.kind == BranchKind::SFC) {
                CHECK(sp.M1 == (H * H + 1) / 2);
                CHECK(sp.M2 == (H * H + 1) / 2);
            }
        }
    }
}

TEST_CASE("built network produces finite logits of the right shape") {
    ArchConfig ac;
    ac.alpha = 2;
    ac.spatial = 4;
    ac.in_channels = 1;
    ac.classes = 5;
    ac.filter_size = 3;
    ac.menus = {{BranchKind::FC, BranchKind::CONV}};
    Network net = build_architecture(ac);
    net.init_params(9);
    int64_t total = 0;
    for (const auto& [name, t] : net.params) total += t.size();
    CHECK(net.param_count() == total);

    BuiltNet bt = net.build(3);
    bt.g.set_input(bt.input, randn({3, 1, 1, 4, 4}, 10));
    Tensor oh = Tensor::zeros({3, 5});
    oh.flat(0) = oh.flat(5 + 1) = oh.flat(10 + 2) = 1.0;
    bt.g.set_input(bt.onehot, oh);
    bt.g.forward();
    CHECK(bt.g.value(bt.logits).dim(0) == 3);
    CHECK(bt.g.value(bt.logits).dim(1) == 5);
    CHECK(bt.g.value(bt.logits).all_finite());
    CHECK(bt.g.value(bt.nll_sum).flat(0) > 0.0);
}

}  // TEST_SUITE
