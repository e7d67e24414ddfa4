#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphnorm/dataset.hpp"
#include "graphnorm/model.hpp"
#include "graphnorm/svm.hpp"
#include "graphnorm/tensor.hpp"
#include "graphnorm/trainer.hpp"

namespace graphnorm {

// ---------------------------------------------------------------------------
// Centeredness
// ---------------------------------------------------------------------------

struct CenterednessScore {
    std::vector<double> per_view;  // mean Frobenius distance per view
    double overall = 0.0;          // mean over every (sample, view) pair
};

inline CenterednessScore centeredness_score(const Tensor& templ,
                                            const std::vector<const MultiViewSample*>& test) {
    if (test.empty()) throw ValidationError("centeredness_score needs >= 1 test sample");
    const std::size_t n_v = test[0]->n_v();
    CenterednessScore score;
    score.per_view.assign(n_v, 0.0);
    for (const MultiViewSample* s : test) {
        if (s->views[0].rows() != templ.rows())
            throw ValidationError("template is " + shape_str(templ) + " but sample '" +
                                  s->subject_id + "' has " + shape_str(s->views[0]));
        for (std::size_t v = 0; v < n_v; ++v) {
            double sq = 0.0;
            for (std::size_t k = 0; k < templ.numel(); ++k) {
                const double d = templ[k] - s->views[v][k];
                sq += d * d;
            }
            score.per_view[v] += std::sqrt(sq);
        }
    }
    for (double& v : score.per_view) {
        v /= static_cast<double>(test.size());
        score.overall += v;
    }
    score.overall /= static_cast<double>(n_v);
    return score;
}

// ---------------------------------------------------------------------------
// Linear baselines: element-wise mean or median over every
// (subject, view) matrix.
// ---------------------------------------------------------------------------

enum class BaselineMethod { Mean, Median };

inline BaselineMethod baseline_from_name(const std::string& s) {
    if (s == "mean") return BaselineMethod::Mean;
    if (s == "median") return BaselineMethod::Median;
    throw ValidationError("unknown baseline '" + s + "' (valid: mean, median)");
}

inline Template baseline_template(const std::vector<const MultiViewSample*>& samples,
                                  BaselineMethod method) {
    if (samples.empty()) throw ValidationError("baseline_template needs >= 1 sample");
    const std::size_t n = samples[0]->n_r();
    Template out{Tensor({n, n})};
    std::vector<double> vals;
    vals.reserve(samples.size() * samples[0]->n_v());
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            vals.clear();
            for (const MultiViewSample* s : samples)
                for (const Tensor& view : s->views) vals.push_back(view(i, j));
            double v;
            if (method == BaselineMethod::Mean) {
                v = 0.0;
                for (double x : vals) v += x;
                v /= static_cast<double>(vals.size());
            } else {
                v = median_in_place(vals);
            }
            out.matrix(i, j) = v;
            out.matrix(j, i) = v;
        }
    validate_template(out);
    return out;
}

// ---------------------------------------------------------------------------
// Discriminative edge scoring between two templates
// ---------------------------------------------------------------------------

enum class ResidualMode {
    Entrywise,        // |T_A_ij - T_B_ij| per edge (default)
    MatrixFrobenius,  // ||T_A - T_B||_F added uniformly to every edge
};

struct DiscriminativenessMatrix {
    Tensor scores;  // n_r x n_r, symmetric, zero diagonal
    double alpha = 0.0;
};

/// Per edge: max(T_A/T_B, T_B/T_A) + alpha * residual, with the ratio set
/// to zero whenever either entry is zero, and
/// alpha = 2 / (mean_offdiag(T_A) + mean_offdiag(T_B)).
inline DiscriminativenessMatrix discriminativeness(
    const Tensor& a, const Tensor& b, ResidualMode mode = ResidualMode::Entrywise) {
    if (!same_shape(a, b) || a.rank() != 2 || a.rows() != a.cols())
        throw ValidationError("discriminativeness needs equal square templates, got " +
                              shape_str(a) + " vs " + shape_str(b));
    const std::size_t n = a.rows();
    double mu_a = 0.0, mu_b = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) {
                mu_a += a(i, j);
                mu_b += b(i, j);
            }
    const double denom = static_cast<double>(n * (n - 1));
    mu_a /= denom;
    mu_b /= denom;
    if (mu_a + mu_b <= 0.0)
        throw ValidationError("both templates are identically zero; alpha is undefined");

    DiscriminativenessMatrix out;
    out.alpha = 2.0 / (mu_a + mu_b);
    out.scores = Tensor({n, n});

    double frob = 0.0;
    if (mode == ResidualMode::MatrixFrobenius) {
        for (std::size_t k = 0; k < a.numel(); ++k) {
            const double d = a[k] - b[k];
            frob += d * d;
        }
        frob = std::sqrt(frob);
    }

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double x = a(i, j), y = b(i, j);
            const double ratio = (x == 0.0 || y == 0.0) ? 0.0 : std::max(x / y, y / x);
            const double residual =
                mode == ResidualMode::Entrywise ? std::fabs(x - y) : frob;
            out.scores(i, j) = ratio + out.alpha * residual;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Top-k edge selection
// ---------------------------------------------------------------------------

struct ScoredEdge {
    std::size_t i = 0;
    std::size_t j = 0;  // i < j
    double score = 0.0;
};

struct EdgeSelection {
    std::vector<ScoredEdge> edges;  // descending score, ties by (i, j)
};

inline EdgeSelection top_k(const DiscriminativenessMatrix& scores, std::size_t k) {
    const std::size_t n = scores.scores.rows();
    const std::size_t available = n * (n - 1) / 2;
    if (k < 1 || k > available)
        throw ValidationError("k = " + std::to_string(k) + " is out of range [1, " +
                              std::to_string(available) + "]");
    std::vector<ScoredEdge> all;
    all.reserve(available);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) all.push_back({i, j, scores.scores(i, j)});
    std::sort(all.begin(), all.end(), [](const ScoredEdge& a, const ScoredEdge& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    all.resize(k);
    return EdgeSelection{std::move(all)};
}

// ---------------------------------------------------------------------------
// Feature extraction: row per sample, selected edges in order, views
// consecutive within each edge (edge-major, view-minor).
// ---------------------------------------------------------------------------

struct FeatureSet {
    Tensor features;  // n_samples x (k * n_v)
    std::vector<std::string> labels;
};

inline FeatureSet extract_features(const std::vector<const MultiViewSample*>& samples,
                                   const EdgeSelection& selection) {
    if (samples.empty()) throw ValidationError("extract_features needs >= 1 sample");
    const std::size_t n_v = samples[0]->n_v();
    const std::size_t k = selection.edges.size();
    FeatureSet out;
    out.features = Tensor({samples.size(), k * n_v});
    for (std::size_t s = 0; s < samples.size(); ++s) {
        out.labels.push_back(samples[s]->label);
        for (std::size_t e = 0; e < k; ++e) {
            const std::vector<double> edge_vec =
                cross_view_features(*samples[s], selection.edges[e].i, selection.edges[e].j);
            for (std::size_t v = 0; v < n_v; ++v) out.features(s, e * n_v + v) = edge_vec[v];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Classification protocol
// ---------------------------------------------------------------------------

using Integrator = std::function<Template(const std::vector<const MultiViewSample*>&)>;

inline Integrator baseline_integrator(BaselineMethod method) {
    return [method](const std::vector<const MultiViewSample*>& samples) {
        return baseline_template(samples, method);
    };
}

struct ClassificationRow {
    int fold = 0;
    std::size_t k = 0;
    double accuracy = 0.0;
};

struct ClassificationReport {
    std::vector<ClassificationRow> rows;  // fold-major, k-minor
    double mean_accuracy = 0.0;           // over all (fold, k) cells
    double std_accuracy = 0.0;            // over per-k fold averages
};

/// Per fold: integrate a template per population from the training
/// members, score edges, and for each k train a fresh classifier on the
/// training members' selected cross-view features. Samples are labeled
/// by population membership.
inline ClassificationReport classification_protocol(const Population& pop_a,
                                                    const Population& pop_b,
                                                    const Integrator& integrator,
                                                    const std::vector<std::size_t>& k_values,
                                                    int folds, std::uint64_t seed) {
    if (pop_a.n_r != pop_b.n_r || pop_a.n_v != pop_b.n_v)
        throw ValidationError("populations disagree on n_r or n_v: " +
                              std::to_string(pop_a.n_r) + "x" + std::to_string(pop_a.n_v) +
                              " vs " + std::to_string(pop_b.n_r) + "x" +
                              std::to_string(pop_b.n_v));
    if (k_values.empty()) throw ValidationError("k_values must be non-empty");

    FoldAssignment fa = split_folds(pop_a, folds, seed);
    FoldAssignment fb = split_folds(pop_b, folds, seed);

    ClassificationReport report;
    for (int f = 0; f < folds; ++f) {
        std::vector<const MultiViewSample*> train_a, test_a, train_b, test_b;
        for (std::size_t i = 0; i < pop_a.size(); ++i)
            (fa.assignment[i] == f ? test_a : train_a).push_back(&pop_a.samples[i]);
        for (std::size_t i = 0; i < pop_b.size(); ++i)
            (fb.assignment[i] == f ? test_b : train_b).push_back(&pop_b.samples[i]);

        Template ta = integrator(train_a);
        Template tb = integrator(train_b);
        DiscriminativenessMatrix scores = discriminativeness(ta.matrix, tb.matrix);

        auto features_for = [&](const std::vector<const MultiViewSample*>& sa,
                                const std::vector<const MultiViewSample*>& sb,
                                const EdgeSelection& sel) {
            FeatureSet xa = extract_features(sa, sel);
            FeatureSet xb = extract_features(sb, sel);
            FeatureSet out;
            out.features = Tensor({sa.size() + sb.size(), xa.features.cols()});
            std::copy(xa.features.data.begin(), xa.features.data.end(),
                      out.features.data.begin());
            std::copy(xb.features.data.begin(), xb.features.data.end(),
                      out.features.data.begin() +
                          static_cast<std::ptrdiff_t>(xa.features.numel()));
            out.labels.assign(sa.size(), "population_a");
            out.labels.insert(out.labels.end(), sb.size(), "population_b");
            return out;
        };

        for (std::size_t k : k_values) {
            EdgeSelection sel = top_k(scores, k);
            FeatureSet train_set = features_for(train_a, train_b, sel);
            FeatureSet test_set = features_for(test_a, test_b, sel);
            TrainedClassifier clf =
                train_classifier(train_set.features, train_set.labels,
                                 default_classifier_grid(),
                                 seed + static_cast<std::uint64_t>(f));
            report.rows.push_back(
                {f, k, accuracy(clf.model, test_set.features, test_set.labels)});
        }
    }

    report.mean_accuracy = 0.0;
    for (const ClassificationRow& r : report.rows) report.mean_accuracy += r.accuracy;
    report.mean_accuracy /= static_cast<double>(report.rows.size());

    // sigma over the per-k averages across folds
    double var = 0.0;
    for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
        double k_mean = 0.0;
        int count = 0;
        for (const ClassificationRow& r : report.rows)
            if (r.k == k_values[ki]) {
                k_mean += r.accuracy;
                ++count;
            }
        k_mean /= count;
        const double d = k_mean - report.mean_accuracy;
        var += d * d;
    }
    report.std_accuracy = std::sqrt(var / static_cast<double>(k_values.size()));
    return report;
}

// ---------------------------------------------------------------------------
// Paired t-test on per-fold scores
// ---------------------------------------------------------------------------

namespace detail {

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = a * std::log(x) + b * std::log(1.0 - x) - std::log(a) -
                            (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    const bool swap = x > (a + 1.0) / (a + b + 2.0);
    if (swap) return 1.0 - incomplete_beta(b, a, 1.0 - x);

    constexpr double tiny = 1e-300;
    double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double result = d;
    for (int m = 1; m < 300; ++m) {
        const double dm = static_cast<double>(m);
        double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        result *= d * c;
        num = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        result *= delta;
        if (std::fabs(delta - 1.0) < 1e-12) break;
    }
    return std::exp(ln_front) * result;
}

}  // namespace detail

struct PairedTTest {
    double t_statistic = 0.0;
    double p_value = 1.0;  // two-tailed
};

inline PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ValidationError("paired_t_test needs two equally sized series of >= 2");
    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n - 1);

    PairedTTest out;
    if (var <= 0.0) {
        out.t_statistic = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        out.p_value = mean == 0.0 ? 1.0 : 0.0;
        return out;
    }
    const double df = static_cast<double>(n - 1);
    out.t_statistic = mean / std::sqrt(var / static_cast<double>(n));
    const double t2 = out.t_statistic * out.t_statistic;
    out.p_value = detail::incomplete_beta(df / 2.0, 0.5, df / (df + t2));
    return out;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

struct CenterednessRow {
    int fold = 0;
    std::string method;
    CenterednessScore score;
};

inline void write_centeredness_csv(const std::vector<CenterednessRow>& rows,
                                   const std::vector<std::string>& view_names,
                                   const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "fold,method";
    for (const std::string& v : view_names) out << ',' << v;
    out << ",overall\n";
    for (const CenterednessRow& r : rows) {
        out << r.fold << ',' << r.method;
        for (double v : r.score.per_view) out << ',' << format_double(v);
        out << ',' << format_double(r.score.overall) << '\n';
    }
}

struct TopologyRow {
    int fold = 0;
    std::string method;
    std::string measure;
    double kl = 0.0;
};

inline void write_topology_csv(const std::vector<TopologyRow>& rows,
                               const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "fold,method,measure,kl_divergence\n";
    for (const TopologyRow& r : rows)
        out << r.fold << ',' << r.method << ',' << r.measure << ','
            << format_double(r.kl) << '\n';
}

inline void write_classification_csv(const std::string& task, const std::string& method,
                                     const ClassificationReport& report,
                                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "task,method,k,fold,accuracy\n";
    for (const ClassificationRow& r : report.rows)
        out << task << ',' << method << ',' << r.k << ',' << r.fold << ','
            << format_double(r.accuracy) << '\n';
}

inline void write_selected_edges_json(const EdgeSelection& selection, std::size_t n_r,
                                      const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["n_r"] = n_r;
    auto& edges = j["edges"] = nlohmann::ordered_json::array();
    for (const ScoredEdge& e : selection.edges)
        edges.push_back({{"i", e.i}, {"j", e.j}, {"score", e.score}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace graphnorm
