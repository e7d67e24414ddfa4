#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "graphnorm/rng.hpp"
#include "graphnorm/tensor.hpp"

namespace graphnorm {

enum class KernelKind { Linear, Rbf };

struct ClassifierConfig {
    KernelKind kernel = KernelKind::Linear;
    double C = 1.0;
    double gamma = 0.1;  // rbf only

    std::string describe() const {
        if (kernel == KernelKind::Linear) return "linear C=" + format_double(C);
        return "rbf C=" + format_double(C) + " gamma=" + format_double(gamma);
    }
};

/// The 12-point default grid: three regularization levels for the linear
/// kernel plus a 3x3 (C, gamma) block for the rbf kernel, searched in
/// this order with first-wins tie-breaking.
inline std::vector<ClassifierConfig> default_classifier_grid() {
    std::vector<ClassifierConfig> grid;
    for (double c : {0.1, 1.0, 10.0}) grid.push_back({KernelKind::Linear, c, 0.0});
    for (double c : {0.1, 1.0, 10.0})
        for (double g : {0.01, 0.1, 1.0}) grid.push_back({KernelKind::Rbf, c, g});
    return grid;
}

/// Soft-margin binary classifier over standardized features. Linear
/// models train by deterministic full-batch hinge subgradient descent;
/// rbf models by dual coordinate ascent with the bias folded into the
/// kernel (K + 1).
class ClassifierModel {
public:
    ClassifierConfig config;
    std::string negative_label;  // mapped to -1 (lexicographically first)
    std::string positive_label;  // mapped to +1

    std::vector<double> feature_mean;
    std::vector<double> feature_scale;

    std::vector<double> linear_weights;  // d+1 with trailing bias weight

    Tensor support_vectors;  // standardized training rows (rbf)
    std::vector<double> dual_coef;  // alpha_i * y_i (rbf)

    bool trained = false;
    std::size_t feature_dim = 0;

    double decision(const std::vector<double>& x) const {
        std::vector<double> z = standardize(x);
        if (config.kernel == KernelKind::Linear) {
            double f = linear_weights.back();
            for (std::size_t d = 0; d < feature_dim; ++d) f += linear_weights[d] * z[d];
            return f;
        }
        double f = 0.0;
        for (std::size_t i = 0; i < support_vectors.rows(); ++i) {
            double sq = 0.0;
            for (std::size_t d = 0; d < feature_dim; ++d) {
                const double diff = z[d] - support_vectors(i, d);
                sq += diff * diff;
            }
            f += dual_coef[i] * (std::exp(-config.gamma * sq) + 1.0);
        }
        return f;
    }

    const std::string& predict(const std::vector<double>& x) const {
        return decision(x) >= 0.0 ? positive_label : negative_label;
    }

    std::vector<double> standardize(const std::vector<double>& x) const {
        if (x.size() != feature_dim)
            throw ValidationError("feature length " + std::to_string(x.size()) +
                                  " does not match trained dimension " +
                                  std::to_string(feature_dim));
        std::vector<double> z(feature_dim);
        for (std::size_t d = 0; d < feature_dim; ++d)
            z[d] = (x[d] - feature_mean[d]) / feature_scale[d];
        return z;
    }
};

namespace detail {

inline std::vector<double> row_of(const Tensor& x, std::size_t i) {
    return std::vector<double>(x.data.begin() + i * x.cols(),
                               x.data.begin() + (i + 1) * x.cols());
}

inline void fit_standardizer(const Tensor& x, std::vector<double>& mean,
                             std::vector<double>& scale) {
    const std::size_t n = x.rows(), d = x.cols();
    mean.assign(d, 0.0);
    scale.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x(i, j) - mean[j];
            scale[j] += c * c;
        }
    for (double& s : scale) {
        s = std::sqrt(s / static_cast<double>(n));
        if (s <= 0.0) s = 1.0;  // constant feature carries no signal
    }
}

inline void train_linear(ClassifierModel& model, const Tensor& z,
                         const std::vector<int>& y) {
    const std::size_t n = z.rows(), d = z.cols();
    const double lambda = 1.0 / (model.config.C * static_cast<double>(n));
    const double radius = 1.0 / std::sqrt(lambda);
    std::vector<double>& w = model.linear_weights;
    w.assign(d + 1, 0.0);
    constexpr int iterations = 400;
    for (int t = 1; t <= iterations; ++t) {
        const double eta = 1.0 / (lambda * static_cast<double>(t + 1));
        std::vector<double> grad(d + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double f = w[d];
            for (std::size_t j = 0; j < d; ++j) f += w[j] * z(i, j);
            if (y[i] * f < 1.0) {
                for (std::size_t j = 0; j < d; ++j) grad[j] -= y[i] * z(i, j);
                grad[d] -= y[i];
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j <= d; ++j) {
            const double reg = j < d ? lambda * w[j] : 0.0;  // bias unregularized
            w[j] -= eta * (reg + grad[j] * inv_n);
        }
        // projection onto the ||w|| <= 1/sqrt(lambda) ball tames the
        // large early steps of the 1/t schedule
        double norm_sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm_sq += w[j] * w[j];
        if (norm_sq > radius * radius) {
            const double shrink = radius / std::sqrt(norm_sq);
            for (std::size_t j = 0; j < d; ++j) w[j] *= shrink;
        }
    }
}

inline void train_rbf(ClassifierModel& model, const Tensor& z, const std::vector<int>& y) {
    const std::size_t n = z.rows(), d = z.cols();
    Tensor kernel({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = z(i, c) - z(j, c);
                sq += diff * diff;
            }
            kernel(i, j) = std::exp(-model.config.gamma * sq) + 1.0;  // +1 absorbs the bias
        }

    std::vector<double> alpha(n, 0.0);
    constexpr int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double f = 0.0;
            for (std::size_t j = 0; j < n; ++j) f += alpha[j] * y[j] * kernel(i, j);
            const double proposed =
                std::clamp(alpha[i] + (1.0 - y[i] * f) / kernel(i, i), 0.0, model.config.C);
            max_delta = std::max(max_delta, std::fabs(proposed - alpha[i]));
            alpha[i] = proposed;
        }
        if (max_delta < 1e-8) break;
    }

    model.support_vectors = z;
    model.dual_coef.resize(n);
    for (std::size_t i = 0; i < n; ++i) model.dual_coef[i] = alpha[i] * y[i];
}

}  // namespace detail

/// Fits one configuration on the full (features, labels) input. Exactly
/// two distinct labels are required; the lexicographically smaller one
/// maps to -1.
inline ClassifierModel fit_classifier(const Tensor& features,
                                      const std::vector<std::string>& labels,
                                      const ClassifierConfig& config) {
    if (features.rank() != 2 || features.rows() != labels.size())
        throw ValidationError("features/labels size mismatch");
    if (!all_finite(features)) throw ValidationError("features must be finite");

    std::vector<std::string> classes;
    for (const std::string& l : labels)
        if (std::find(classes.begin(), classes.end(), l) == classes.end())
            classes.push_back(l);
    if (classes.size() < 2)
        throw ValidationError("classifier needs two classes, got single-class input");
    if (classes.size() > 2)
        throw ValidationError("classifier supports exactly two classes, got " +
                              std::to_string(classes.size()));
    std::sort(classes.begin(), classes.end());

    ClassifierModel model;
    model.config = config;
    model.negative_label = classes[0];
    model.positive_label = classes[1];
    model.feature_dim = features.cols();

    detail::fit_standardizer(features, model.feature_mean, model.feature_scale);
    Tensor z({features.rows(), features.cols()});
    for (std::size_t i = 0; i < features.rows(); ++i)
        for (std::size_t j = 0; j < features.cols(); ++j)
            z(i, j) = (features(i, j) - model.feature_mean[j]) / model.feature_scale[j];

    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        y[i] = labels[i] == model.positive_label ? 1 : -1;

    if (config.kernel == KernelKind::Linear)
        detail::train_linear(model, z, y);
    else
        detail::train_rbf(model, z, y);
    model.trained = true;
    return model;
}

inline double accuracy(const ClassifierModel& model, const Tensor& features,
                       const std::vector<std::string>& labels) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < features.rows(); ++i)
        if (model.predict(detail::row_of(features, i)) == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(features.rows());
}

struct GridPoint {
    ClassifierConfig config;
    double cv_accuracy = 0.0;
};

struct TrainedClassifier {
    ClassifierModel model;       // best config refit on all data
    double cv_accuracy = 0.0;    // inner-CV accuracy of the best config
    std::vector<GridPoint> grid; // every config with its inner-CV accuracy
};

/// Grid search by stratified inner cross-validation (3 folds, or 2 when
/// the data cannot fill 3), deterministic in the seed; ties keep the
/// earliest grid entry.
inline TrainedClassifier train_classifier(
    const Tensor& features, const std::vector<std::string>& labels,
    const std::vector<ClassifierConfig>& grid = default_classifier_grid(),
    std::uint64_t seed = 0) {
    if (features.rows() < 4)
        throw ValidationError("classifier training needs >= 4 samples");
    if (grid.empty()) throw ValidationError("empty hyperparameter grid");

    const std::size_t n = features.rows();
    const int k = n >= 6 ? 3 : 2;

    // stratified fold assignment with a dealing pointer shared across classes
    std::map<std::string, std::vector<std::size_t>> by_label;
    std::vector<std::string> label_order;
    for (std::size_t i = 0; i < n; ++i) {
        if (by_label.find(labels[i]) == by_label.end()) label_order.push_back(labels[i]);
        by_label[labels[i]].push_back(i);
    }
    Rng rng(seed);
    std::vector<int> fold(n, 0);
    std::size_t ptr = 0;
    for (const std::string& l : label_order) {
        auto& idx = by_label[l];
        rng.shuffle(idx);
        for (std::size_t i : idx) fold[i] = static_cast<int>(ptr++ % k);
    }

    TrainedClassifier out;
    double best = -1.0;
    for (const ClassifierConfig& cfg : grid) {
        double acc_sum = 0.0;
        int folds_used = 0;
        for (int f = 0; f < k; ++f) {
            std::vector<std::size_t> tr, te;
            for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(i);
            if (te.empty() || tr.size() < 2) continue;

            Tensor xtr({tr.size(), features.cols()}), xte({te.size(), features.cols()});
            std::vector<std::string> ytr, yte;
            for (std::size_t r = 0; r < tr.size(); ++r)
                for (std::size_t c = 0; c < features.cols(); ++c)
                    xtr(r, c) = features(tr[r], c);
            for (std::size_t r = 0; r < te.size(); ++r)
                for (std::size_t c = 0; c < features.cols(); ++c)
                    xte(r, c) = features(te[r], c);
            for (std::size_t i : tr) ytr.push_back(labels[i]);
            for (std::size_t i : te) yte.push_back(labels[i]);

            // a fold whose training half lost one class scores as chance
            bool two_classes =
                std::count(ytr.begin(), ytr.end(), ytr.front()) != static_cast<long>(ytr.size());
            if (!two_classes) {
                acc_sum += 0.5;
                ++folds_used;
                continue;
            }
            ClassifierModel m = fit_classifier(xtr, ytr, cfg);
            acc_sum += accuracy(m, xte, yte);
            ++folds_used;
        }
        const double cv_acc = folds_used ? acc_sum / folds_used : 0.0;
        out.grid.push_back({cfg, cv_acc});
        if (cv_acc > best) {
            best = cv_acc;
            out.model.config = cfg;
        }
    }
    out.model = fit_classifier(features, labels, out.model.config);
    out.cv_accuracy = best;
    return out;
}

}  // namespace graphnorm
