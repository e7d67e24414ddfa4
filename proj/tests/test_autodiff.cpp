#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <graphnorm/autodiff.hpp>
#include <graphnorm/rng.hpp>

using namespace graphnorm;
using ad::Tape;
using ad::Value;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Random entries with |x| >= margin, keeping nonsmooth ops away from
/// their kinks (margin is far above 10 * eps for eps = 1e-5).
Tensor random_away_from_zero(std::vector<std::size_t> shape, Rng& rng,
                             double margin = 0.05) {
    Tensor t(std::move(shape));
    for (double& v : t.data) {
        const double mag = rng.uniform(margin, 2.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

/// Scalarizes an op output against a fixed weighting so upstream
/// gradients are non-uniform.
Value weighted_sum(Tape& t, Value x, const Tensor& w) {
    return t.sum(t.mul(x, t.leaf(w)));
}

}  // namespace

TEST_CASE("relu and abs subgradient conventions") {
    Tape t;
    Value x = t.leaf(Tensor::scalar(2.0));
    Value r = t.relu(x);
    CHECK(t.scalar_value(r) == doctest::Approx(2.0));
    t.backward(r);
    CHECK(t.grad(x)[0] == doctest::Approx(1.0));

    Tape t2;
    Value y = t2.leaf(Tensor::scalar(-3.0));
    Value a = t2.abs(y);
    CHECK(t2.scalar_value(a) == doctest::Approx(3.0));
    t2.backward(a);
    CHECK(t2.grad(y)[0] == doctest::Approx(-1.0));

    // at the kink both derivatives are fixed to zero
    Tape t3;
    Value z = t3.leaf(Tensor::scalar(0.0));
    Value rz = t3.sum(t3.add(t3.relu(z), t3.abs(z)));
    t3.backward(rz);
    CHECK(t3.grad(z)[0] == 0.0);
}

TEST_CASE("frobenius norm of the zero matrix has zero gradient") {
    Tape t;
    Value x = t.leaf(Tensor::zeros({3, 3}));
    Value f = t.frobenius_norm(x);
    CHECK(t.scalar_value(f) == 0.0);
    t.backward(f);
    for (double g : t.grad(x).data) CHECK(g == 0.0);
}

TEST_CASE("backward of sum(W x) gives grad_W = [[1,2],[1,2]]") {
    Tape t;
    Tensor w({2, 2});
    w.data = {1, 1, 1, 1};
    Tensor x({2, 1});
    x.data = {1, 2};
    Value wv = t.leaf(w);
    Value xv = t.leaf(x);
    Value root = t.sum(t.matmul(wv, xv));
    CHECK(t.scalar_value(root) == doctest::Approx(6.0));
    t.backward(root);
    const Tensor& gw = t.grad(wv);
    CHECK(gw(0, 0) == doctest::Approx(1.0));
    CHECK(gw(0, 1) == doctest::Approx(2.0));
    CHECK(gw(1, 0) == doctest::Approx(1.0));
    CHECK(gw(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("unused leaf receives zero gradient") {
    Tape t;
    Value used = t.leaf(Tensor::scalar(1.5));
    Value unused = t.leaf(Tensor::scalar(7.0));
    Value root = t.scale(used, 3.0);
    t.backward(root);
    CHECK(t.grad(unused)[0] == 0.0);
    CHECK(t.grad(used)[0] == doctest::Approx(3.0));
}

TEST_CASE("mean of a 4-vector distributes gradient 0.25") {
    Tape t;
    Value v = t.leaf(Tensor::vector({1.0, 2.0, 3.0, 4.0}));
    Value m = t.mean(v);
    CHECK(t.scalar_value(m) == doctest::Approx(2.5));
    t.backward(m);
    for (double g : t.grad(v).data) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("diamond graph accumulates: d(x+x)/dx = 2") {
    Tape t;
    Value x = t.leaf(Tensor::scalar(1.0));
    Value root = t.add(x, x);
    t.backward(root);
    CHECK(t.grad(x)[0] == doctest::Approx(2.0));
}

TEST_CASE("backward rejects a non-scalar root") {
    Tape t;
    Value x = t.leaf(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(x), ValidationError);
}

TEST_CASE("shape mismatches report both shapes") {
    Tape t;
    Value a = t.leaf(Tensor::zeros({2, 3}));
    Value b = t.leaf(Tensor::zeros({4, 5}));
    std::string msg;
    try {
        t.matmul(a, b);
    } catch (const ValidationError& e) {
        msg = e.what();
    }
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
    CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("[2x3]"), ValidationError);
}

TEST_CASE("gradient_check on x^2 at x = 3") {
    auto f = [](Tape& t, const std::vector<Value>& p) { return t.mul(p[0], p[0]); };
    const double err = ad::gradient_check(f, {Tensor::scalar(3.0)}, 1e-5);
    CHECK(err < 1e-8);
}

TEST_CASE("gradient_check on a constant function is exactly zero") {
    auto f = [](Tape& t, const std::vector<Value>& p) {
        return t.sub(t.sum(p[0]), t.sum(p[0]));
    };
    Rng rng(3);
    const double err = ad::gradient_check(f, {random_tensor({3}, rng)}, 1e-5);
    CHECK(err == 0.0);
}

TEST_CASE("gradient_check validates eps range") {
    auto f = [](Tape& t, const std::vector<Value>& p) { return t.sum(p[0]); };
    CHECK_THROWS_AS(ad::gradient_check(f, {Tensor::scalar(1.0)}, 1e-8), ValidationError);
    CHECK_THROWS_AS(ad::gradient_check(f, {Tensor::scalar(1.0)}, 1e-2), ValidationError);
}

TEST_CASE("every primitive passes a finite-difference check") {
    Rng rng(42);
    constexpr double eps = 1e-5;
    constexpr double tol = 1e-6;

    SUBCASE("matmul") {
        Tensor w = random_tensor({4, 3}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.matmul(p[0], p[1]), w);
        };
        CHECK(ad::gradient_check(f, {random_tensor({4, 2}, rng), random_tensor({2, 3}, rng)},
                                 eps) < tol);
    }
    SUBCASE("matmul_nt") {
        Tensor w = random_tensor({4, 3}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.matmul_nt(p[0], p[1]), w);
        };
        CHECK(ad::gradient_check(f, {random_tensor({4, 2}, rng), random_tensor({3, 2}, rng)},
                                 eps) < tol);
    }
    SUBCASE("add sub mul") {
        Tensor w = random_tensor({3, 3}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.mul(t.add(p[0], p[1]), t.sub(p[0], p[1])), w);
        };
        CHECK(ad::gradient_check(f, {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)},
                                 eps) < tol);
    }
    SUBCASE("div") {
        Tensor w = random_tensor({2, 3}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.div(p[0], p[1]), w);
        };
        CHECK(ad::gradient_check(
                  f, {random_tensor({2, 3}, rng), random_away_from_zero({2, 3}, rng, 0.5)},
                  eps) < tol);
    }
    SUBCASE("add_row") {
        Tensor w = random_tensor({3, 4}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.add_row(p[0], p[1]), w);
        };
        CHECK(ad::gradient_check(f, {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                                 eps) < tol);
    }
    SUBCASE("scalar ops") {
        auto f = [](Tape& t, const std::vector<Value>& p) {
            return t.sum(t.add_const(t.scale(p[0], 2.5), -0.75));
        };
        CHECK(ad::gradient_check(f, {random_tensor({5}, rng)}, eps) < tol);
    }
    SUBCASE("relu") {
        Tensor w = random_tensor({4, 4}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.relu(p[0]), w);
        };
        CHECK(ad::gradient_check(f, {random_away_from_zero({4, 4}, rng)}, eps) < tol);
    }
    SUBCASE("abs") {
        Tensor w = random_tensor({4, 4}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.abs(p[0]), w);
        };
        CHECK(ad::gradient_check(f, {random_away_from_zero({4, 4}, rng)}, eps) < tol);
    }
    SUBCASE("sum mean") {
        auto f = [](Tape& t, const std::vector<Value>& p) {
            return t.add(t.sum(p[0]), t.mean(p[0]));
        };
        CHECK(ad::gradient_check(f, {random_tensor({3, 5}, rng)}, eps) < tol);
    }
    SUBCASE("sum_axis") {
        Tensor w0 = random_tensor({5}, rng);
        Tensor w1 = random_tensor({3}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            Value s0 = weighted_sum(t, t.sum_axis(p[0], 0), w0);
            Value s1 = weighted_sum(t, t.sum_axis(p[0], 1), w1);
            return t.add(s0, s1);
        };
        CHECK(ad::gradient_check(f, {random_tensor({3, 5}, rng)}, eps) < tol);
    }
    SUBCASE("frobenius_norm") {
        auto f = [](Tape& t, const std::vector<Value>& p) {
            return t.frobenius_norm(p[0]);
        };
        CHECK(ad::gradient_check(f, {random_away_from_zero({4, 4}, rng)}, eps) < tol);
    }
    SUBCASE("log2") {
        Tensor w = random_tensor({6}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.log2(p[0]), w);
        };
        CHECK(ad::gradient_check(f, {random_tensor({6}, rng, 0.5, 3.0)}, eps) < tol);
    }
    SUBCASE("broadcast") {
        Tensor w = random_tensor({3, 2}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.broadcast(p[0], {3, 2}), w);
        };
        CHECK(ad::gradient_check(f, {Tensor::scalar(1.3)}, eps) < tol);
    }
    SUBCASE("reshape concat") {
        Tensor w = random_tensor({10}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            Value a = t.reshape(p[0], {4});
            Value b = t.reshape(p[1], {6});
            return weighted_sum(t, t.concat(a, b), w);
        };
        CHECK(ad::gradient_check(f, {random_tensor({2, 2}, rng), random_tensor({3, 2}, rng)},
                                 eps) < tol);
    }
    SUBCASE("index_select with a repeated row accumulates") {
        Tensor w = random_tensor({3, 2}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.index_select(p[0], {1, 1, 0}), w);
        };
        CHECK(ad::gradient_check(f, {random_tensor({4, 2}, rng)}, eps) < tol);
    }
    SUBCASE("edge_messages") {
        const auto edges = ad::EdgeIndex::complete(4);
        const std::size_t d_out = 3, d_in = 2;
        Tensor w = random_tensor({4, d_out}, rng);
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.edge_messages(p[0], p[1], edges, d_out, d_in), w);
        };
        CHECK(ad::gradient_check(f,
                                 {random_tensor({edges.pairs.size(), d_out * d_in}, rng),
                                  random_tensor({4, d_in}, rng)},
                                 eps) < tol);
    }
    SUBCASE("pairwise_abs_diff") {
        Tensor w = random_tensor({5, 5}, rng);
        Tensor v({5, 3});
        // rows pairwise distinct in every coordinate, far from abs kinks
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t c = 0; c < 3; ++c)
                v(i, c) = 0.37 * static_cast<double>(i + 1) + 0.11 * static_cast<double>(c) +
                          0.05 * rng.uniform();
        auto f = [&](Tape& t, const std::vector<Value>& p) {
            return weighted_sum(t, t.pairwise_abs_diff(p[0], 1.0 / 3.0), w);
        };
        CHECK(ad::gradient_check(f, {v}, eps) < tol);
    }
}

TEST_CASE("edge_messages matches an explicit per-edge loop") {
    Rng rng(7);
    const auto edges = ad::EdgeIndex::complete(5);
    const std::size_t d_out = 3, d_in = 2;
    Tensor theta = random_tensor({edges.pairs.size(), d_out * d_in}, rng);
    Tensor v = random_tensor({5, d_in}, rng);

    Tape t;
    Value out = t.edge_messages(t.leaf(theta), t.leaf(v), edges, d_out, d_in);

    Tensor expect({5, d_out});
    for (std::size_t e = 0; e < edges.pairs.size(); ++e) {
        const auto [i, j] = edges.pairs[e];
        for (std::size_t d = 0; d < d_out; ++d)
            for (std::size_t c = 0; c < d_in; ++c) {
                expect(i, d) += theta(e, d * d_in + c) * v(j, c);
                expect(j, d) += theta(e, d * d_in + c) * v(i, c);
            }
    }
    for (std::size_t k = 0; k < expect.numel(); ++k)
        CHECK(t.value(out)[k] == doctest::Approx(expect[k]).epsilon(1e-12));
}

TEST_CASE("forward evaluation is reproducible") {
    Rng rng(11);
    Tensor a = random_tensor({6, 4}, rng);
    Tensor b = random_tensor({4, 3}, rng);
    auto run = [&] {
        Tape t;
        Value r = t.frobenius_norm(t.relu(t.matmul(t.leaf(a), t.leaf(b))));
        return t.scalar_value(r);
    };
    const double first = run();
    for (int i = 0; i < 3; ++i) CHECK(run() == first);
}
