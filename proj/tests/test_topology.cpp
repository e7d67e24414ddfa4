#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <graphnorm/rng.hpp>
#include <graphnorm/topology.hpp>

using namespace graphnorm;

namespace {

Tensor sym(std::size_t n, std::initializer_list<double> upper) {
    Tensor m({n, n});
    auto it = upper.begin();
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            m(i, j) = *it;
            m(j, i) = *it;
            ++it;
        }
    return m;
}

Tensor random_graph(std::size_t n, Rng& rng, double lo = 0.1, double hi = 1.0) {
    Tensor m({n, n});
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double w = rng.uniform(lo, hi);
            m(i, j) = w;
            m(j, i) = w;
        }
    return m;
}

// -- independent oracles ----------------------------------------------------

// Effective size via explicitly materialized proportion and normalized
// mutual-weight matrices.
std::vector<double> effective_size_oracle(const Tensor& a) {
    const std::size_t n = a.rows();
    Tensor p({n, n}), m({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0, row_max = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            row_sum += a(i, u);
            row_max = std::max(row_max, a(i, u));
        }
        if (row_max <= 0.0) throw ValidationError("oracle: isolated node");
        for (std::size_t u = 0; u < n; ++u) {
            p(i, u) = a(i, u) / row_sum;
            m(i, u) = a(i, u) / row_max;
        }
    }
    std::vector<double> e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !(a(i, j) > 0.0)) continue;
            double inner = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                if (a(j, k) > 0.0) inner += p(i, k) * m(j, k);
            e[i] += 1.0 - inner;
        }
    return e;
}

// Clustering via direct triple loops and pow().
std::vector<double> clustering_oracle(const Tensor& a) {
    const std::size_t n = a.rows();
    double w_max = 0.0;
    for (double v : a.data) w_max = std::max(w_max, v);
    if (!(w_max > 0.0)) throw ValidationError("oracle: no positive edge");
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t deg = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && a(i, j) > 0.0) ++deg;
        if (deg < 2) continue;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                if (j == i || k == i || j == k) continue;
                if (!(a(i, j) > 0.0) || !(a(i, k) > 0.0) || !(a(j, k) > 0.0)) continue;
                acc += std::pow(a(i, j) * a(i, k) * a(j, k) / (w_max * w_max * w_max),
                                1.0 / 3.0);
            }
        c[i] = acc / static_cast<double>(deg * (deg - 1));
    }
    return c;
}

// Fixed 100-sweep power iteration with an explicit transition matrix.
std::vector<double> pagerank_oracle(const Tensor& a, double damping) {
    const std::size_t n = a.rows();
    Tensor p({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) row_sum += a(i, j);
        for (std::size_t j = 0; j < n; ++j) p(i, j) = a(i, j) / row_sum;
    }
    std::vector<double> x(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 100; ++it) {
        std::vector<double> nx(n, (1.0 - damping) / static_cast<double>(n));
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) nx[j] += damping * x[i] * p(i, j);
        x = nx;
    }
    double total = 0.0;
    for (double v : x) total += v;
    for (double& v : x) v /= total;
    return x;
}

}  // namespace

TEST_CASE("pagerank fixed points on symmetric graphs") {
    std::vector<double> complete = pagerank(sym(3, {1, 1, 1}));
    for (double v : complete) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-10));

    std::vector<double> pair = pagerank(sym(2, {0.7}));
    CHECK(pair[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(pair[1] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("pagerank on a weighted path matches the brute-force iteration") {
    Tensor a = sym(3, {1.0, 0.0, 2.0});  // A-(1)-B-(2)-C
    std::vector<double> got = pagerank(a);
    std::vector<double> expect = pagerank_oracle(a, 0.85);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-10));

    double sum = 0.0;
    for (double v : got) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    // with the iteration cap lifted, the fixed point satisfies the
    // stopping tolerance: one more sweep moves x by less than tol
    std::vector<double> fixed = pagerank(a, 0.85, 100000, 1e-10);
    const std::size_t n = 3;
    std::vector<double> strength = node_strength(a);
    std::vector<double> next(n, 0.15 / 3.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            next[j] += 0.85 * fixed[i] * a(i, j) / strength[i];
    double residual = 0.0;
    for (std::size_t j = 0; j < n; ++j) residual += std::fabs(next[j] - fixed[j]);
    CHECK(residual < 1e-9);
}

TEST_CASE("pagerank rejects an all-zero row") {
    Tensor a = sym(3, {1.0, 0.0, 0.0});  // node 2 isolated
    CHECK_THROWS_WITH_AS(pagerank(a), doctest::Contains("all-zero row"), ValidationError);
}

TEST_CASE("effective size on star and triangle") {
    // star: center 0, three unit leaves
    Tensor star({4, 4});
    for (std::size_t l = 1; l < 4; ++l) {
        star(0, l) = 1.0;
        star(l, 0) = 1.0;
    }
    std::vector<double> e = effective_size(star);
    CHECK(e[0] == doctest::Approx(3.0).epsilon(1e-12));
    for (std::size_t l = 1; l < 4; ++l) CHECK(e[l] == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> tri = effective_size(sym(3, {1, 1, 1}));
    for (double v : tri) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    Tensor isolated = sym(3, {1.0, 0.0, 0.0});
    CHECK_THROWS_WITH_AS(effective_size(isolated), doctest::Contains("isolated"),
                         ValidationError);
}

TEST_CASE("clustering coefficient on triangle, path, and 4-clique") {
    for (double v : clustering_coefficient(sym(3, {1, 1, 1})))
        CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    for (double v : clustering_coefficient(sym(3, {1.0, 0.0, 2.0})))
        CHECK(v == 0.0);  // no triangles on a path

    for (double v : clustering_coefficient(sym(4, {1, 1, 1, 1, 1, 1})))
        CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(clustering_coefficient(Tensor({3, 3})), ValidationError);
}

TEST_CASE("clustering values stay in [0, 1]") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> c = clustering_coefficient(random_graph(7, rng, 0.0, 1.0));
        for (double v : c) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("exhaustive 4-node agreement with independent oracles") {
    // all 3^6 assignments of {0, 0.5, 1} to the six edges of K4
    const double levels[3] = {0.0, 0.5, 1.0};
    std::size_t compared = 0, degenerate = 0;
    for (int code = 0; code < 729; ++code) {
        int c = code;
        double w[6];
        for (double& x : w) {
            x = levels[c % 3];
            c /= 3;
        }
        Tensor a = sym(4, {w[0], w[1], w[2], w[3], w[4], w[5]});

        bool isolated = false;
        for (std::size_t i = 0; i < 4; ++i) {
            bool any = false;
            for (std::size_t j = 0; j < 4; ++j) any = any || a(i, j) > 0.0;
            isolated = isolated || !any;
        }

        if (isolated) {
            CHECK_THROWS_AS(effective_size(a), ValidationError);
            CHECK_THROWS_AS(effective_size_oracle(a), ValidationError);
            ++degenerate;
        } else {
            std::vector<double> got = effective_size(a);
            std::vector<double> expect = effective_size_oracle(a);
            for (std::size_t i = 0; i < 4; ++i)
                CHECK(std::fabs(got[i] - expect[i]) <= 1e-12);
        }

        const bool all_zero = code == 0;
        if (all_zero) {
            CHECK_THROWS_AS(clustering_coefficient(a), ValidationError);
            CHECK_THROWS_AS(clustering_oracle(a), ValidationError);
        } else {
            std::vector<double> got = clustering_coefficient(a);
            std::vector<double> expect = clustering_oracle(a);
            for (std::size_t i = 0; i < 4; ++i)
                CHECK(std::fabs(got[i] - expect[i]) <= 1e-12);
            ++compared;
        }
    }
    CHECK(compared == 728);
    CHECK(degenerate > 0);
}

TEST_CASE("all measures are permutation-equivariant") {
    Rng rng(11);
    Tensor a = random_graph(6, rng);
    const std::vector<std::size_t> pi = {2, 5, 0, 3, 1, 4};
    Tensor ap({6, 6});
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) ap(pi[i], pi[j]) = a(i, j);

    for (TopologyMeasure m : {TopologyMeasure::Strength, TopologyMeasure::PageRank,
                              TopologyMeasure::EffectiveSize, TopologyMeasure::Clustering}) {
        std::vector<double> base = raw_measure(a, m);
        std::vector<double> perm = raw_measure(ap, m);
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(perm[pi[i]] == doctest::Approx(base[i]).epsilon(1e-12));
    }
}

TEST_CASE("scale invariance of the weight-normalized measures") {
    Rng rng(13);
    Tensor a = random_graph(5, rng);
    Tensor scaled = a;
    for (double& v : scaled.data) v *= 7.3;

    auto close = [](const std::vector<double>& x, const std::vector<double>& y) {
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-12));
    };
    close(clustering_coefficient(a), clustering_coefficient(scaled));
    close(effective_size(a), effective_size(scaled));
    close(profile(a, TopologyMeasure::Strength).p,
          profile(scaled, TopologyMeasure::Strength).p);
}

TEST_CASE("profiles are probability vectors") {
    Rng rng(17);
    Tensor a = random_graph(6, rng);
    for (TopologyMeasure m : {TopologyMeasure::Strength, TopologyMeasure::PageRank,
                              TopologyMeasure::EffectiveSize, TopologyMeasure::Clustering}) {
        TopologyProfile p = profile(a, m);
        double sum = 0.0;
        for (double v : p.p) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    // pagerank output is already normalized; the profile only adds the floor
    std::vector<double> pr = pagerank(a);
    TopologyProfile pp = profile(a, TopologyMeasure::PageRank);
    for (std::size_t i = 0; i < pr.size(); ++i)
        CHECK(pp.p[i] == doctest::Approx(pr[i]).epsilon(1e-6));
}

TEST_CASE("one-directional KL hand value and sign") {
    CHECK(kl_divergence({0.5, 0.5}, {0.25, 0.75}) == doctest::Approx(0.20752).epsilon(1e-4));
    CHECK(kl_divergence({0.5, 0.5}, {0.5, 0.5}) == doctest::Approx(0.0));

    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> g(4), t(4);
        double gs = 0.0, ts = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            g[i] = rng.uniform(0.1, 1.0);
            t[i] = rng.uniform(0.1, 1.0);
            gs += g[i];
            ts += t[i];
        }
        for (std::size_t i = 0; i < 4; ++i) {
            g[i] /= gs;
            t[i] /= ts;
        }
        CHECK(kl_divergence(g, t) >= 0.0);
    }
}

TEST_CASE("topology divergence vanishes when the template matches the population") {
    Rng rng(23);
    Tensor view = random_graph(6, rng);
    MultiViewSample s;
    s.subject_id = "a";
    s.label = "t";
    s.views = {view};
    std::vector<const MultiViewSample*> test = {&s};
    for (TopologyMeasure m : {TopologyMeasure::Strength, TopologyMeasure::PageRank,
                              TopologyMeasure::EffectiveSize, TopologyMeasure::Clustering})
        CHECK(topology_divergence(view, test, m) == doctest::Approx(0.0).epsilon(1e-12));

    // and is positive for a genuinely different template
    Tensor other = random_graph(6, rng);
    CHECK(topology_divergence(other, test, TopologyMeasure::Strength) > 0.0);
}

TEST_CASE("measure names parse and reject unknowns") {
    CHECK(topology_measure_from_name("pagerank") == TopologyMeasure::PageRank);
    CHECK(topology_measure_from_name("effective_size") == TopologyMeasure::EffectiveSize);
    std::string msg;
    try {
        topology_measure_from_name("bogus");
    } catch (const ValidationError& e) {
        msg = e.what();
    }
    CHECK(msg.find("strength") != std::string::npos);
    CHECK(msg.find("clustering") != std::string::npos);
}
