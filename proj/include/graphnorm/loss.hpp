#pragma once

#include <vector>

#include "graphnorm/autodiff.hpp"
#include "graphnorm/dataset.hpp"
#include "graphnorm/rng.hpp"
#include "graphnorm/tensor.hpp"

namespace graphnorm {

constexpr double kDistributionEpsilon = 1e-8;

/// Per-view loss weights: lambda_v = (1/mu_v) / max_j (1/mu_j), where
/// mu_v is the mean off-diagonal weight of view v over the given
/// samples. The largest-reciprocal view gets weight 1; all weights lie
/// in (0, 1]. Keeps heterogeneous view scales from dominating the
/// centeredness term.
struct ViewNormWeights {
    std::vector<double> lambda;
};

inline ViewNormWeights view_norm_weights(const std::vector<const MultiViewSample*>& samples) {
    if (samples.empty()) throw ValidationError("view_norm_weights needs >= 1 sample");
    const std::size_t n_v = samples[0]->n_v();
    const std::size_t n_r = samples[0]->n_r();
    std::vector<double> mu(n_v, 0.0);
    const double count =
        static_cast<double>(samples.size()) * static_cast<double>(n_r * (n_r - 1));
    for (const MultiViewSample* s : samples)
        for (std::size_t v = 0; v < n_v; ++v)
            for (std::size_t i = 0; i < n_r; ++i)
                for (std::size_t j = 0; j < n_r; ++j)
                    if (i != j) mu[v] += s->views[v](i, j);
    for (double& m : mu) m /= count;

    double max_recip = 0.0;
    for (std::size_t v = 0; v < n_v; ++v) {
        if (mu[v] <= 0.0)
            throw ValidationError("view " + std::to_string(v) +
                                  " has zero mean weight; cannot normalize");
        max_recip = std::max(max_recip, 1.0 / mu[v]);
    }
    ViewNormWeights w;
    for (double m : mu) w.lambda.push_back((1.0 / m) / max_recip);
    return w;
}

/// Uniform draw of `size` distinct entries from train_indices, without
/// replacement. Callers draw a fresh subset per (subject, epoch).
inline std::vector<std::size_t> sample_subset(const std::vector<std::size_t>& train_indices,
                                              std::size_t size, Rng& rng) {
    if (size > train_indices.size())
        throw ValidationError("subset size " + std::to_string(size) + " exceeds " +
                              std::to_string(train_indices.size()) + " training samples");
    std::vector<std::size_t> positions =
        rng.sample_without_replacement(train_indices.size(), size);
    std::vector<std::size_t> out;
    out.reserve(size);
    for (std::size_t p : positions) out.push_back(train_indices[p]);
    return out;
}

// ---------------------------------------------------------------------------
// Centeredness: lambda_v * sum over subset members of the Frobenius
// distance between the template and that member's view v.
// ---------------------------------------------------------------------------

inline ad::Value centeredness_loss(ad::Tape& t, ad::Value templ,
                                   const std::vector<const MultiViewSample*>& subset,
                                   std::size_t view, double lambda_v) {
    if (subset.empty()) throw ValidationError("centeredness_loss needs >= 1 subset member");
    ad::Value total = t.leaf(Tensor::scalar(0.0));
    for (const MultiViewSample* s : subset)
        total = t.add(total, t.frobenius_norm(t.sub(templ, t.leaf(s->views[view]))));
    return t.scale(total, lambda_v);
}

inline double centeredness_loss(const Tensor& templ,
                                const std::vector<const MultiViewSample*>& subset,
                                std::size_t view, double lambda_v) {
    ad::Tape t;
    return t.scalar_value(centeredness_loss(t, t.leaf(templ), subset, view, lambda_v));
}

// ---------------------------------------------------------------------------
// Node-strength distributions
// ---------------------------------------------------------------------------

/// Normalized node strengths of a nonnegative square matrix: row sums
/// divided by their total, then floor-smoothed as
/// p <- (p + eps) / (1 + n eps) so KL terms stay finite.
struct StrengthDistribution {
    std::vector<double> p;
};

inline StrengthDistribution strength_distribution(const Tensor& m,
                                                  double epsilon = kDistributionEpsilon) {
    if (m.rank() != 2 || m.rows() != m.cols())
        throw ValidationError("strength_distribution needs a square matrix, got " +
                              shape_str(m));
    const std::size_t n = m.rows();
    std::vector<double> k(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) k[i] += m(i, j);
        total += k[i];
    }
    if (total <= 0.0) throw ValidationError("degenerate graph: total node strength is zero");
    StrengthDistribution d;
    d.p.resize(n);
    const double denom = 1.0 + static_cast<double>(n) * epsilon;
    for (std::size_t i = 0; i < n; ++i) d.p[i] = (k[i] / total + epsilon) / denom;
    return d;
}

inline ad::Value strength_distribution(ad::Tape& t, ad::Value m,
                                       double epsilon = kDistributionEpsilon) {
    const Tensor& mv = t.value(m);
    if (mv.rank() != 2 || mv.rows() != mv.cols())
        throw ValidationError("strength_distribution needs a square matrix, got " +
                              shape_str(mv));
    const std::size_t n = mv.rows();
    ad::Value k = t.sum_axis(m, 1);
    ad::Value total = t.sum(k);
    if (t.scalar_value(total) <= 0.0)
        throw ValidationError("degenerate graph: total node strength is zero");
    ad::Value p = t.div(k, t.broadcast(total, {n}));
    return t.scale(t.add_const(p, epsilon), 1.0 / (1.0 + static_cast<double>(n) * epsilon));
}

/// Ground truth for one view: the mean of the subset members' strength
/// distributions, renormalized to sum exactly one.
inline StrengthDistribution ground_truth_distribution(
    const std::vector<const MultiViewSample*>& subset, std::size_t view,
    double epsilon = kDistributionEpsilon) {
    if (subset.empty())
        throw ValidationError("ground_truth_distribution needs >= 1 subset member");
    StrengthDistribution mean;
    mean.p.assign(subset[0]->n_r(), 0.0);
    for (const MultiViewSample* s : subset) {
        StrengthDistribution d = strength_distribution(s->views[view], epsilon);
        for (std::size_t i = 0; i < mean.p.size(); ++i) mean.p[i] += d.p[i];
    }
    double total = 0.0;
    for (double& v : mean.p) {
        v /= static_cast<double>(subset.size());
        total += v;
    }
    for (double& v : mean.p) v /= total;
    return mean;
}

// ---------------------------------------------------------------------------
// Symmetric KL divergence, base 2
// ---------------------------------------------------------------------------

inline void check_positive_distribution(const std::vector<double>& p, const char* name) {
    for (double v : p)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ValidationError(std::string(name) +
                                  " distribution must be strictly positive and finite");
}

inline double symmetric_kl(const StrengthDistribution& t, const StrengthDistribution& x) {
    if (t.p.size() != x.p.size())
        throw ValidationError("symmetric_kl length mismatch: " + std::to_string(t.p.size()) +
                              " vs " + std::to_string(x.p.size()));
    check_positive_distribution(t.p, "first");
    check_positive_distribution(x.p, "second");
    double kl = 0.0;
    for (std::size_t i = 0; i < t.p.size(); ++i)
        kl += t.p[i] * std::log2(t.p[i] / x.p[i]) + x.p[i] * std::log2(x.p[i] / t.p[i]);
    if (!std::isfinite(kl)) throw ValidationError("symmetric_kl produced a non-finite value");
    return kl;
}

inline ad::Value symmetric_kl(ad::Tape& t, ad::Value dist, const StrengthDistribution& x) {
    check_positive_distribution(x.p, "ground truth");
    ad::Value xv = t.leaf(Tensor::vector(x.p));
    ad::Value forward_term = t.sum(t.mul(dist, t.log2(t.div(dist, xv))));
    ad::Value reverse_term = t.sum(t.mul(xv, t.log2(t.div(xv, dist))));
    return t.add(forward_term, reverse_term);
}

// ---------------------------------------------------------------------------
// Full loss: per view, lambda-weighted centeredness plus beta-weighted
// symmetric KL between the template's strength distribution and that
// view's subset ground truth. The template's distribution enters every
// view's KL term; the ground truths differ per view.
// ---------------------------------------------------------------------------

/// Scalar nodes of the combined loss and its two summands. The KL node
/// is absent (idx -1) when beta = 0: the ablated configuration never
/// touches the template's strength distribution.
struct LossNodes {
    ad::Value total;
    ad::Value centeredness;
    ad::Value kl;
};

inline LossNodes topology_constrained_loss_nodes(
    ad::Tape& t, ad::Value templ, const std::vector<const MultiViewSample*>& subset,
    const ViewNormWeights& weights, double beta) {
    if (beta < 0.0) throw ValidationError("beta must be >= 0");
    if (subset.empty()) throw ValidationError("loss needs >= 1 subset member");
    const std::size_t n_v = subset[0]->n_v();
    if (weights.lambda.size() != n_v)
        throw ValidationError("lambda count does not match view count");

    LossNodes nodes;
    nodes.centeredness = t.leaf(Tensor::scalar(0.0));
    ad::Value templ_strength{};
    if (beta > 0.0) {
        templ_strength = strength_distribution(t, templ);
        nodes.kl = t.leaf(Tensor::scalar(0.0));
    }

    for (std::size_t v = 0; v < n_v; ++v) {
        nodes.centeredness =
            t.add(nodes.centeredness, centeredness_loss(t, templ, subset, v, weights.lambda[v]));
        if (beta > 0.0) {
            StrengthDistribution gt = ground_truth_distribution(subset, v);
            nodes.kl = t.add(nodes.kl, symmetric_kl(t, templ_strength, gt));
        }
    }
    nodes.total = beta > 0.0 ? t.add(nodes.centeredness, t.scale(nodes.kl, beta))
                             : nodes.centeredness;
    return nodes;
}

inline ad::Value topology_constrained_loss(ad::Tape& t, ad::Value templ,
                                           const std::vector<const MultiViewSample*>& subset,
                                           const ViewNormWeights& weights, double beta) {
    return topology_constrained_loss_nodes(t, templ, subset, weights, beta).total;
}

inline double topology_constrained_loss(const Tensor& templ,
                                        const std::vector<const MultiViewSample*>& subset,
                                        const ViewNormWeights& weights, double beta) {
    ad::Tape t;
    return t.scalar_value(topology_constrained_loss(t, t.leaf(templ), subset, weights, beta));
}

/// Centeredness and KL parts reported separately (same definitions as the
/// combined loss; used for log decomposition).
struct LossParts {
    double centeredness = 0.0;
    double kl = 0.0;
    double total(double beta) const { return centeredness + beta * kl; }
};

inline LossParts loss_parts(const Tensor& templ,
                            const std::vector<const MultiViewSample*>& subset,
                            const ViewNormWeights& weights) {
    LossParts parts;
    StrengthDistribution ts = strength_distribution(templ);
    for (std::size_t v = 0; v < weights.lambda.size(); ++v) {
        parts.centeredness += centeredness_loss(templ, subset, v, weights.lambda[v]);
        parts.kl += symmetric_kl(ts, ground_truth_distribution(subset, v));
    }
    return parts;
}

}  // namespace graphnorm
