#pragma once

#include <string>
#include <vector>

#include "graphnorm/dataset.hpp"
#include "graphnorm/loss.hpp"
#include "graphnorm/tensor.hpp"

namespace graphnorm {

enum class TopologyMeasure { Strength, PageRank, EffectiveSize, Clustering };

inline const std::vector<std::pair<std::string, TopologyMeasure>>& topology_measure_names() {
    static const std::vector<std::pair<std::string, TopologyMeasure>> names = {
        {"strength", TopologyMeasure::Strength},
        {"pagerank", TopologyMeasure::PageRank},
        {"effective_size", TopologyMeasure::EffectiveSize},
        {"clustering", TopologyMeasure::Clustering},
    };
    return names;
}

inline std::string topology_measure_name(TopologyMeasure m) {
    for (const auto& [name, val] : topology_measure_names())
        if (val == m) return name;
    return "?";
}

inline TopologyMeasure topology_measure_from_name(const std::string& s) {
    std::string valid;
    for (const auto& [name, val] : topology_measure_names()) {
        if (name == s) return val;
        valid += valid.empty() ? name : ", " + name;
    }
    throw ValidationError("unknown measure '" + s + "' (valid: " + valid + ")");
}

inline void require_square(const Tensor& a, const char* who) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw ValidationError(std::string(who) + " needs a square matrix, got " +
                              shape_str(a));
}

inline std::vector<double> node_strength(const Tensor& a) {
    require_square(a, "node_strength");
    std::vector<double> k(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) k[i] += a(i, j);
    return k;
}

/// Power iteration on the walk that leaves node i along edge (i, j) with
/// probability A_ij / strength(i), mixed with a uniform teleport of mass
/// (1 - damping). Stops when the L1 change drops below tol or after
/// max_iter sweeps; the result is normalized to sum exactly 1.
inline std::vector<double> pagerank(const Tensor& a, double damping = 0.85,
                                    int max_iter = 100, double tol = 1e-10) {
    require_square(a, "pagerank");
    const std::size_t n = a.rows();
    std::vector<double> strength = node_strength(a);
    for (std::size_t i = 0; i < n; ++i)
        if (strength[i] <= 0.0)
            throw ValidationError("pagerank: node " + std::to_string(i) +
                                  " has an all-zero row");

    std::vector<double> x(n, 1.0 / static_cast<double>(n)), next(n);
    const double teleport = (1.0 - damping) / static_cast<double>(n);
    for (int it = 0; it < max_iter; ++it) {
        std::fill(next.begin(), next.end(), teleport);
        for (std::size_t i = 0; i < n; ++i) {
            const double push = damping * x[i] / strength[i];
            for (std::size_t j = 0; j < n; ++j) next[j] += push * a(i, j);
        }
        double delta = 0.0;
        for (std::size_t j = 0; j < n; ++j) delta += std::fabs(next[j] - x[j]);
        x.swap(next);
        if (delta < tol) break;
    }
    double total = 0.0;
    for (double v : x) total += v;
    for (double& v : x) v /= total;
    return x;
}

/// Burt's effective size of each node's ego network:
///   e(i) = sum_{j in N(i)} (1 - sum_{k in N(j)} p_ik m_jk)
/// with p_ik = A_ik / strength(i) and m_jk = A_jk / max_u A_ju.
/// Neighborhoods contain strictly positive edges; the zero diagonal makes
/// the k = i and k = j terms vanish.
inline std::vector<double> effective_size(const Tensor& a) {
    require_square(a, "effective_size");
    const std::size_t n = a.rows();
    std::vector<double> strength = node_strength(a);
    std::vector<double> row_max(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) row_max[i] = std::max(row_max[i], a(i, j));
    for (std::size_t i = 0; i < n; ++i)
        if (row_max[i] <= 0.0)
            throw ValidationError("effective_size: node " + std::to_string(i) +
                                  " is isolated");

    std::vector<double> e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || a(i, j) <= 0.0) continue;
            double redundancy = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (a(j, k) <= 0.0) continue;
                redundancy += (a(i, k) / strength[i]) * (a(j, k) / row_max[j]);
            }
            e[i] += 1.0 - redundancy;
        }
    }
    return e;
}

/// Weighted clustering via the geometric mean of triangle edge weights,
/// normalized by the maximum weight in the graph. The sum runs over
/// ordered neighbor pairs (j, k), so an unweighted triangle scores 1.
/// Nodes of degree < 2 score 0.
inline std::vector<double> clustering_coefficient(const Tensor& a) {
    require_square(a, "clustering_coefficient");
    const std::size_t n = a.rows();
    double w_max = 0.0;
    for (double v : a.data) w_max = std::max(w_max, v);
    if (w_max <= 0.0)
        throw ValidationError("clustering_coefficient needs at least one positive edge");

    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && a(i, j) > 0.0) neighbors[i].push_back(j);

    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ni = neighbors[i];
        if (ni.size() < 2) continue;
        double acc = 0.0;
        for (std::size_t j : ni)
            for (std::size_t k : ni) {
                if (k == j || a(j, k) <= 0.0) continue;
                acc += std::cbrt((a(i, j) / w_max) * (a(i, k) / w_max) * (a(j, k) / w_max));
            }
        c[i] = acc / (static_cast<double>(ni.size()) * static_cast<double>(ni.size() - 1));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Profiles and divergence
// ---------------------------------------------------------------------------

struct TopologyProfile {
    TopologyMeasure measure;
    std::vector<double> p;  // sums to 1, floor-smoothed
};

inline std::vector<double> raw_measure(const Tensor& a, TopologyMeasure m) {
    switch (m) {
        case TopologyMeasure::Strength:
            return node_strength(a);
        case TopologyMeasure::PageRank:
            return pagerank(a);
        case TopologyMeasure::EffectiveSize:
            return effective_size(a);
        case TopologyMeasure::Clustering:
            return clustering_coefficient(a);
    }
    throw ValidationError("unknown topology measure");
}

inline TopologyProfile profile(const Tensor& a, TopologyMeasure m) {
    std::vector<double> raw = raw_measure(a, m);
    double total = 0.0;
    for (double v : raw) total += v;
    if (total <= 0.0)
        throw ValidationError("profile: " + topology_measure_name(m) +
                              " sums to zero, cannot normalize");
    const double denom = 1.0 + static_cast<double>(raw.size()) * kDistributionEpsilon;
    for (double& v : raw) v = (v / total + kDistributionEpsilon) / denom;
    return TopologyProfile{m, std::move(raw)};
}

/// One-directional D_KL(g || t) in base 2. The evaluation protocol is
/// deliberately asymmetric, unlike the symmetric training term.
inline double kl_divergence(const std::vector<double>& g, const std::vector<double>& t) {
    if (g.size() != t.size()) throw ValidationError("kl_divergence length mismatch");
    check_positive_distribution(g, "ground truth");
    check_positive_distribution(t, "template");
    double kl = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) kl += g[i] * std::log2(g[i] / t[i]);
    if (!std::isfinite(kl)) throw ValidationError("kl_divergence produced a non-finite value");
    return kl;
}

/// Ground truth is the renormalized mean profile over every
/// (test sample, view) pair; returns D_KL(ground truth || template profile).
inline double topology_divergence(const Tensor& templ,
                                  const std::vector<const MultiViewSample*>& test_samples,
                                  TopologyMeasure m) {
    if (test_samples.empty())
        throw ValidationError("topology_divergence needs >= 1 test sample");
    std::vector<double> g(templ.rows(), 0.0);
    std::size_t count = 0;
    for (const MultiViewSample* s : test_samples)
        for (const Tensor& view : s->views) {
            TopologyProfile p = profile(view, m);
            if (p.p.size() != g.size())
                throw ValidationError("topology_divergence: node-count mismatch");
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += p.p[i];
            ++count;
        }
    double total = 0.0;
    for (double& v : g) {
        v /= static_cast<double>(count);
        total += v;
    }
    for (double& v : g) v /= total;

    return kl_divergence(g, profile(templ, m).p);
}

}  // namespace graphnorm
