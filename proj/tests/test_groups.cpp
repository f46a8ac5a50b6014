#include <cmath>

#include "doctest.h"
#include "symmetria/groups.hpp"
#include "symmetria/rng.hpp"

using namespace symmetria;

namespace {

Tensor random_feature(Shape s, uint64_t seed) {
    Tensor t(std::move(s));
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.flat(i) = rng.normal();
    return t;
}

double max_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat(i) - b.flat(i)));
    return m;
}

}  // namespace

TEST_SUITE("groups") {

TEST_CASE("cyclic group laws") {
    const FiniteGroup c4 = build_cyclic(4);
    c4.check_axioms();
    CHECK(c4.order == 4);
    CHECK(c4.identity == 0);
    CHECK(c4.compose(1, 1) == 2);
    CHECK(c4.compose(3, 2) == 1);
    CHECK(c4.inverse(3) == 1);
    CHECK(c4.inverse(0) == 0);
}

TEST_CASE("translation group on the torus") {
    const GridGroup tg = build_translation(3, 4);
    tg.group.check_axioms();
    CHECK(tg.group.order == 12);
    CHECK(tg.rotation_order == 1);
    CHECK(tg.element(0, 2, 3) == 2 * 4 + 3);
    CHECK(tg.shift_row(tg.element(0, 2, 3)) == 2);
    CHECK(tg.shift_col(tg.element(0, 2, 3)) == 3);
}

TEST_CASE("row shift acts as the frozen permutation") {
    // shifting [[1,2],[3,4]] by (1,0) gives [[3,4],[1,2]]
    const GridGroup tg = build_translation(2, 2);
    const Tensor x = Tensor::from({1, 1, 1, 2, 2}, {1, 2, 3, 4});
    const Tensor y = act(tg, tg.element(0, 1, 0), x);
    CHECK(y.flat(0) == 3.0);
    CHECK(y.flat(1) == 4.0);
    CHECK(y.flat(2) == 1.0);
    CHECK(y.flat(3) == 2.0);
}

TEST_CASE("rotate_index is a 4-cycle with the frozen orientation") {
    int rx = -1, ry = -1;
    rotate_index(1, 3, 3, 0, 0, rx, ry);
    CHECK(rx == 0);
    CHECK(ry == 2);
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) {
            int cx = x, cy = y;
            for (int k = 0; k < 4; ++k) rotate_index(1, 3, 3, cx, cy, cx, cy);
            CHECK(cx == x);
            CHECK(cy == y);
        }
}

TEST_CASE("rotate_offset rotates the linear part") {
    int ra = 0, rb = 0;
    rotate_offset(1, 1, 0, ra, rb);
    CHECK(ra == 0);
    CHECK(rb == -1);
    rotate_offset(2, 1, 2, ra, rb);
    CHECK(ra == -1);
    CHECK(rb == -2);
    rotate_offset(4, 5, -3, ra, rb);  // full turn
    CHECK(ra == 5);
    CHECK(rb == -3);
}

TEST_CASE("p4 group structure") {
    const GridGroup p4 = build_p4(2, 2);
    p4.group.check_axioms();
    CHECK(p4.group.order == 16);
    CHECK(p4.rotation_order == 4);
    CHECK(p4.rot_of(p4.element(3, 1, 0)) == 3);
    CHECK_THROWS_AS(build_p4(2, 3), GroupError);
}

TEST_CASE("slot convention round trips") {
    const GridGroup p4 = build_p4(2, 2);
    for (int g = 0; g < p4.group.order; ++g) {
        int s = -1, qx = -1, qy = -1;
        p4.element_to_slot(g, s, qx, qy);
        CHECK(p4.slot_to_element(s, qx, qy) == g);
    }
}

TEST_CASE("act is a homomorphism on plain and group features") {
    const GridGroup p4 = build_p4(4, 4);
    const Tensor plain = random_feature({1, 2, 1, 4, 4}, 11);
    const Tensor grp = random_feature({1, 2, 4, 4, 4}, 13);
    Rng rng(17);
    for (int trial = 0; trial < 8; ++trial) {
        const int g1 = static_cast<int>(rng.uniform_int(p4.group.order));
        const int g2 = static_cast<int>(rng.uniform_int(p4.group.order));
        const int g12 = p4.group.compose(g1, g2);
        CHECK(max_diff(act(p4, g1, act(p4, g2, plain)), act(p4, g12, plain)) == 0.0);
        CHECK(max_diff(act(p4, g1, act(p4, g2, grp)), act(p4, g12, grp)) == 0.0);
    }
    // identity acts trivially
    CHECK(max_diff(act(p4, p4.group.identity, grp), grp) == 0.0);
}

TEST_CASE("act preserves norms and matches its index map") {
    const GridGroup p4 = build_p4(4, 4);
    const Tensor grp = random_feature({2, 3, 4, 4, 4}, 23);
    const int g = p4.element(2, 1, 3);
    const Tensor y = act(p4, g, grp);
    CHECK(y.squared_norm() == doctest::Approx(grp.squared_norm()).epsilon(1e-15));
    const auto map = act_index_map(p4, g, grp.shape());
    REQUIRE(static_cast<int64_t>(map.size()) == grp.size());
    for (int64_t i = 0; i < y.size(); ++i)
        CHECK(y.flat(i) == grp.flat(map[static_cast<size_t>(i)]));
}

TEST_CASE("inverse action undoes the action") {
    const GridGroup tg = build_translation(5, 5);
    const Tensor x = random_feature({1, 1, 1, 5, 5}, 31);
    const int g = tg.element(0, 2, 4);
    const Tensor back = act(tg, tg.group.inverse(g), act(tg, g, x));
    CHECK(max_diff(back, x) == 0.0);
}

}  // TEST_SUITE
