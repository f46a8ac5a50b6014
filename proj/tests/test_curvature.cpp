#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "symmetria/checks.hpp"
#include "symmetria/curvature.hpp"
#include "symmetria/rng.hpp"

using namespace symmetria;

namespace {

Tensor randn(Shape s, uint64_t seed) {
    Tensor t(std::move(s));
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.flat(i) = rng.normal();
    return t;
}

double rel_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.size() == b.size());
    double num = 0, den = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        num += (a.flat(i) - b.flat(i)) * (a.flat(i) - b.flat(i));
        den += b.flat(i) * b.flat(i);
    }
    return std::sqrt(num) / std::max(1e-300, std::sqrt(den));
}

}  // namespace

TEST_SUITE("curvature") {

TEST_CASE("log-likelihood Hessian for the uniform two-class predictive") {
    const Tensor probs = Tensor::from({2}, {0.5, 0.5});
    const Tensor lam = loglik_hessian(probs);
    CHECK(lam.at({0, 0}) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(lam.at({0, 1}) == doctest::Approx(-0.25).epsilon(1e-15));
    CHECK(lam.at({1, 0}) == doctest::Approx(-0.25).epsilon(1e-15));
    CHECK(lam.at({1, 1}) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("log-likelihood Hessian rows sum to zero and the form is PSD") {
    Rng rng(17);
    double raw[4];
    double zmax = 0;
    for (int i = 0; i < 4; ++i) raw[i] = std::exp(rng.normal());
    double sum = raw[0] + raw[1] + raw[2] + raw[3];
    Tensor probs({4});
    for (int64_t i = 0; i < 4; ++i) probs.flat(i) = raw[i] / sum;
    const Tensor lam = loglik_hessian(probs);
    for (int64_t r = 0; r < 4; ++r) {
        double rs = 0;
        for (int64_t c = 0; c < 4; ++c) rs += lam.at({r, c});
        zmax = std::max(zmax, std::abs(rs));
    }
    CHECK(zmax < 1e-15);
    for (int t = 0; t < 8; ++t) {
        double x[4], q = 0;
        for (int i = 0; i < 4; ++i) x[i] = rng.normal();
        for (int64_t r = 0; r < 4; ++r)
            for (int64_t c = 0; c < 4; ++c) q += x[r] * lam.at({r, c}) * x[c];
        CHECK(q > -1e-12);
    }
}

TEST_CASE("kronecker expansion micro oracles") {
    CurvatureBlock blk;
    blk.layout = FactorLayout::OutLeading;
    blk.D = 2;
    blk.G = 2;
    blk.A = Tensor::from({2, 2}, {1, 2, 2, 5});
    blk.B = Tensor::from({2, 2}, {1, 0, 0, 3});
    blk.rows = 1;
    const Tensor f = expand_kronecker(blk);
    REQUIRE(f.dim(0) == 4);
    CHECK(f.at({0, 0}) == doctest::Approx(1.0));
    CHECK(f.at({0, 1}) == doctest::Approx(2.0));
    CHECK(f.at({2, 2}) == doctest::Approx(3.0));
    CHECK(f.at({1, 1}) == doctest::Approx(5.0));
    CHECK(f.at({3, 3}) == doctest::Approx(15.0));

    CurvatureBlock inl = blk;
    inl.layout = FactorLayout::InLeading;
    const Tensor fi = expand_kronecker(inl);
    CHECK(fi.at({1, 1}) == doctest::Approx(3.0));  // flat 1 = (d=0, g=1)
    CHECK(fi.at({2, 2}) == doctest::Approx(5.0));  // flat 2 = (d=1, g=0)

    CurvatureBlock fc;
    fc.layout = FactorLayout::DenseFC;
    fc.D = 1;
    fc.G = 2;
    fc.fcP = 1;
    fc.fcCi = 1;
    fc.A = Tensor::from({1, 1}, {2});
    fc.B = Tensor::from({2, 2}, {1, 0, 0, 3});
    fc.rows = 2;
    const Tensor ff = expand_kronecker(fc);
    CHECK(ff.at({0, 0}) == doctest::Approx(1.0));
    CHECK(ff.at({1, 1}) == doctest::Approx(3.0));

    int64_t d = -1, g = -1;
    blk.d_g_of(3, d, g);
    CHECK(d == 1);
    CHECK(g == 1);
    inl.d_g_of(1, d, g);
    CHECK(d == 0);
    CHECK(g == 1);
}

TEST_CASE("rbf factor projections") {
    const Tensor a = Tensor::from({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    const Tensor phi = Tensor::full({2, 1}, 1.0);
    const Tensor ap = project_columns(a, phi, 2);
    REQUIRE(ap.dim(0) == 2);
    CHECK(ap.at({0, 0}) == doctest::Approx(2.0));
    CHECK(ap.at({0, 1}) == doctest::Approx(0.0));
    CHECK(ap.at({1, 1}) == doctest::Approx(2.0));

    const Tensor b = Tensor::from({2, 2}, {1, 0, 0, 2});
    const Tensor bp = project_matrix(b, phi);
    REQUIRE(bp.size() == 1);
    CHECK(bp.flat(0) == doctest::Approx(3.0));
}

TEST_CASE("exact GGN blocks are symmetric and positive semi-definite") {
    Network net = single_branch_net(BranchKind::FC, 1, 2, 3, 2, 21);
    const Tensor images = randn({2, 1, 3, 3}, 22);
    const auto ggn = exact_ggn(net, images);
    CHECK(!ggn.empty());
    Rng rng(23);
    for (const auto& [name, f] : ggn) {
        CAPTURE(name);
        const int64_t P = f.dim(0);
        double asym = 0;
        for (int64_t i = 0; i < P; ++i)
            for (int64_t j = 0; j < P; ++j) asym = std::max(asym, std::abs(f.at({i, j}) - f.at({j, i})));
        CHECK(asym < 1e-12);
        for (int t = 0; t < 4; ++t) {
            std::vector<double> x(static_cast<size_t>(P));
            for (auto& v : x) v = rng.normal();
            double q = 0;
            for (int64_t i = 0; i < P; ++i)
                for (int64_t j = 0; j < P; ++j) q += x[static_cast<size_t>(i)] * f.at({i, j}) * x[static_cast<size_t>(j)];
            CHECK(q > -1e-10);
        }
    }
}

TEST_CASE("chunked accumulation is chunk-size invariant") {
    Network net = single_branch_net(BranchKind::CONV, 1, 2, 4, 3, 31);
    const Tensor images = randn({5, 1, 4, 4}, 32);
    const auto one = kfac_blocks(net, images, 1);
    const auto big = kfac_blocks(net, images, 128);
    REQUIRE(one.size() == big.size());
    for (size_t i = 0; i < one.size(); ++i) {
        CAPTURE(one[i].param);
        CHECK(one[i].param == big[i].param);
        CHECK(one[i].rows == big[i].rows);
        CHECK(rel_diff(one[i].A, big[i].A) < 1e-12);
        CHECK(rel_diff(one[i].B, big[i].B) < 1e-12);
    }
}

TEST_CASE("stationary branches carry curvature on anchor values only") {
    Network net = single_branch_net(BranchKind::SCONV, 1, 2, 4, 3, 41);
    const Tensor images = randn({3, 1, 4, 4}, 42);
    const auto blocks = kfac_blocks(net, images, 128);
    bool saw_u = false;
    for (const auto& blk : blocks) {
        CHECK(blk.param.find(".z") == std::string::npos);
        CHECK(blk.param.find("omega") == std::string::npos);
        if (blk.param == "L0.SCONV.u") saw_u = true;
    }
    CHECK(saw_u);
}

TEST_CASE("curvature verification suite") {
    const auto rows = check_kfac(0);
    if (!all_pass(rows)) {
        std::puts(render_check_table(rows).c_str());
    }
    CHECK(all_pass(rows));
}

}  // TEST_SUITE
