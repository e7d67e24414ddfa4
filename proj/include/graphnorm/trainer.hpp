#pragma once

#include <atomic>
#include <chrono>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

#include "graphnorm/dataset.hpp"
#include "graphnorm/loss.hpp"
#include "graphnorm/model.hpp"

namespace graphnorm {

struct TrainConfig {
    double lr = 0.0006;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    int max_epochs = 1200;
    int patience = 50;
    std::size_t subset_size = 10;
    double beta = 25.0;  // KL weight; 0 is the ablated configuration
    std::array<std::size_t, 3> dims{36, 24, 5};
    std::size_t hidden = 32;
    std::uint64_t seed = 0;
    Readout readout = Readout::Mean;
};

inline void validate_config(const TrainConfig& c) {
    if (c.lr <= 0.0) throw ValidationError("lr must be positive");
    if (c.adam_beta1 <= 0.0 || c.adam_beta1 >= 1.0 || c.adam_beta2 <= 0.0 ||
        c.adam_beta2 >= 1.0)
        throw ValidationError("adam decay rates must lie in (0, 1)");
    if (c.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
    if (c.patience < 1) throw ValidationError("patience must be >= 1");
    if (c.patience >= c.max_epochs)
        throw ValidationError("patience must be below max_epochs");
    if (c.subset_size < 1) throw ValidationError("subset_size must be >= 1");
    if (c.beta < 0.0) throw ValidationError("beta must be >= 0");
    if (c.hidden < 1) throw ValidationError("hidden must be >= 1");
    for (std::size_t d : c.dims)
        if (d < 1) throw ValidationError("dims must be >= 1");
}

// ---------------------------------------------------------------------------
// Adam with bias correction
// ---------------------------------------------------------------------------

struct AdamState {
    Tensor m;
    Tensor v;
};

/// p <- p - lr * m_hat / (sqrt(v_hat) + 1e-8), t counts steps from 1.
inline void adam_step(Tensor& p, const Tensor& g, AdamState& st, const TrainConfig& cfg,
                      int t, const std::string& param_name = "param") {
    if (t < 1) throw ValidationError("adam step index must be >= 1");
    if (!same_shape(p, g))
        throw ValidationError("adam gradient shape mismatch for " + param_name + ": " +
                              shape_str(p) + " vs " + shape_str(g));
    if (!all_finite(g))
        throw ValidationError("non-finite gradient for parameter '" + param_name + "'");
    if (st.m.shape.empty()) {
        st.m = Tensor(p.shape);
        st.v = Tensor(p.shape);
    }
    constexpr double eps = 1e-8;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, t);
    const double corr2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < p.numel(); ++i) {
        st.m[i] = b1 * st.m[i] + (1.0 - b1) * g[i];
        st.v[i] = b2 * st.v[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = st.m[i] / corr1;
        const double v_hat = st.v[i] / corr2;
        p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

// ---------------------------------------------------------------------------
// Post-training refinement
// ---------------------------------------------------------------------------

/// Midpoint-of-central-values median; reorders v.
inline double median_in_place(std::vector<double>& v) {
    if (v.empty()) throw ValidationError("median of an empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

inline Template median_template(const std::vector<Template>& templates) {
    if (templates.empty()) throw ValidationError("median over zero templates");
    const std::size_t n = templates[0].matrix.rows();
    Template out{Tensor({n, n})};
    std::vector<double> vals(templates.size());
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            for (std::size_t s = 0; s < templates.size(); ++s)
                vals[s] = templates[s].matrix(i, j);
            const double med = median_in_place(vals);
            out.matrix(i, j) = med;
            out.matrix(j, i) = med;
        }
    return out;
}

/// Element-wise median over the subject-biased templates of the training
/// samples; removes the bias toward any single input subject.
inline Template refine(const ModelParams& model,
                       const std::vector<const MultiViewSample*>& train) {
    if (train.empty()) throw ValidationError("refine needs >= 1 training sample");
    std::vector<Template> templates;
    templates.reserve(train.size());
    for (const MultiViewSample* s : train) templates.push_back(forward_template(model, *s));
    Template refined = median_template(templates);
    validate_template(refined);
    return refined;
}

// ---------------------------------------------------------------------------
// Single-fold training
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_centeredness = 0.0;
    double train_kl = 0.0;
    double test_loss = 0.0;
    std::int64_t elapsed_ms = 0;
};

struct TrainResult {
    ModelParams model;  // parameters from the best-test-loss epoch
    std::vector<EpochRecord> history;
    int stopped_epoch = 0;
    int best_epoch = 0;
    double best_test_loss = 0.0;
    ViewNormWeights lambda;
    Template refined_template;
};

/// Full-batch training. Per epoch: every training subject gets a fresh
/// random subset and contributes one backward pass; a single Adam step
/// consumes the mean gradient. The test loss scores each test subject
/// against the entire training set (no randomness), drives early
/// stopping, and selects the returned parameters.
inline TrainResult train_fold(const std::vector<const MultiViewSample*>& train,
                              const std::vector<const MultiViewSample*>& test,
                              const TrainConfig& cfg) {
    validate_config(cfg);
    if (train.empty() || test.empty())
        throw ValidationError("train_fold needs non-empty train and test sets");
    if (cfg.subset_size > train.size())
        throw ValidationError("subset_size " + std::to_string(cfg.subset_size) +
                              " exceeds training set of " + std::to_string(train.size()));

    const std::size_t n_v = train[0]->n_v();
    ModelParams model = init_model(cfg.dims, n_v, cfg.hidden, cfg.seed, cfg.readout);
    ViewNormWeights lambda = view_norm_weights(train);

    std::vector<SampleContext> train_ctx, test_ctx;
    train_ctx.reserve(train.size());
    for (const MultiViewSample* s : train) train_ctx.push_back(make_context(*s));
    test_ctx.reserve(test.size());
    for (const MultiViewSample* s : test) test_ctx.push_back(make_context(*s));

    std::vector<std::size_t> train_positions(train.size());
    std::iota(train_positions.begin(), train_positions.end(), std::size_t{0});

    auto params = named_params(model);
    std::vector<AdamState> opt_state(params.size());
    std::vector<Tensor> grad_acc(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        grad_acc[i] = Tensor(params[i].second->shape);

    Rng rng(cfg.seed);
    TrainResult out;
    out.lambda = lambda;

    ModelParams best_model = model;
    double best_test = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int epochs_since_best = 0;

    ad::Tape tape;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (Tensor& g : grad_acc) std::fill(g.data.begin(), g.data.end(), 0.0);
        double loss_sum = 0.0, center_sum = 0.0, kl_sum = 0.0;

        for (std::size_t si = 0; si < train.size(); ++si) {
            std::vector<std::size_t> subset_idx =
                sample_subset(train_positions, cfg.subset_size, rng);
            std::vector<const MultiViewSample*> subset;
            subset.reserve(subset_idx.size());
            for (std::size_t p : subset_idx) subset.push_back(train[p]);

            tape.reset();
            ForwardPass fp = forward(tape, model, train_ctx[si]);
            LossNodes loss;
            try {
                loss = topology_constrained_loss_nodes(tape, fp.template_matrix, subset,
                                                       lambda, cfg.beta);
            } catch (const ValidationError& e) {
                // an all-zero template means every ReLU dimension died; the
                // model cannot recover from that state
                throw std::runtime_error(
                    "training collapsed to a degenerate template at epoch " +
                    std::to_string(epoch) + " (subject '" + train[si]->subject_id +
                    "'): " + e.what() +
                    ". A different seed or wider embedding dims avoids dead-ReLU "
                    "initialization.");
            }
            const double loss_value = tape.scalar_value(loss.total);
            if (!std::isfinite(loss_value))
                throw std::runtime_error("non-finite training loss at epoch " +
                                         std::to_string(epoch));
            loss_sum += loss_value;
            center_sum += tape.scalar_value(loss.centeredness);
            if (cfg.beta > 0.0) kl_sum += tape.scalar_value(loss.kl);

            tape.backward(loss.total);
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                const Tensor& g = tape.grad(fp.param_leaves[pi]);
                for (std::size_t k = 0; k < g.numel(); ++k) grad_acc[pi][k] += g[k];
            }
        }

        const double inv_n = 1.0 / static_cast<double>(train.size());
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            for (double& g : grad_acc[pi].data) g *= inv_n;
            adam_step(*params[pi].second, grad_acc[pi], opt_state[pi], cfg, epoch,
                      params[pi].first);
        }

        double test_loss = 0.0;
        for (std::size_t si = 0; si < test.size(); ++si) {
            tape.reset();
            ForwardPass fp = forward(tape, model, test_ctx[si]);
            test_loss += tape.scalar_value(topology_constrained_loss(
                tape, fp.template_matrix, train, lambda, cfg.beta));
        }
        test_loss /= static_cast<double>(test.size());
        if (!std::isfinite(test_loss))
            throw std::runtime_error("non-finite test loss at epoch " +
                                     std::to_string(epoch));

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum * inv_n;
        rec.train_centeredness = center_sum * inv_n;
        rec.train_kl = kl_sum * inv_n;
        rec.test_loss = test_loss;
        rec.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        out.history.push_back(rec);
        out.stopped_epoch = epoch;

        if (test_loss < best_test) {
            best_test = test_loss;
            best_model = model;
            best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        if (epochs_since_best >= cfg.patience) break;
    }

    out.model = std::move(best_model);
    out.best_epoch = best_epoch;
    out.best_test_loss = best_test;
    out.refined_template = refine(out.model, train);
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct FoldOutcome {
    int fold = 0;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    TrainResult result;
    double refined_test_centeredness = 0.0;  // mean Frobenius distance to held-out views
};

struct CvResult {
    FoldAssignment assignment;
    std::vector<FoldOutcome> folds;
    double mean_centeredness = 0.0;
};

inline double mean_frobenius_distance(const Tensor& templ,
                                      const std::vector<const MultiViewSample*>& samples) {
    if (samples.empty()) throw ValidationError("centeredness over an empty set");
    double total = 0.0;
    std::size_t count = 0;
    for (const MultiViewSample* s : samples)
        for (const Tensor& view : s->views) {
            double sq = 0.0;
            for (std::size_t k = 0; k < view.numel(); ++k) {
                const double d = templ[k] - view[k];
                sq += d * d;
            }
            total += std::sqrt(sq);
            ++count;
        }
    return total / static_cast<double>(count);
}

/// One model per fold, trained on the other k-1 folds. Per-fold seeds are
/// cfg.seed + fold so folds are decorrelated yet reproducible. Folds are
/// independent; `jobs` of them run concurrently.
inline CvResult run_cv(const Population& pop, int k, const TrainConfig& cfg, int jobs = 1) {
    validate_config(cfg);
    CvResult cv;
    cv.assignment = split_folds(pop, k, cfg.seed);
    cv.folds.resize(k);

    std::atomic<int> next_fold{0};
    std::vector<std::exception_ptr> errors(k);

    auto worker = [&] {
        while (true) {
            const int f = next_fold.fetch_add(1);
            if (f >= k) return;
            try {
                FoldOutcome& out = cv.folds[f];
                out.fold = f;
                out.train_idx = cv.assignment.train_indices(f);
                out.test_idx = cv.assignment.test_indices(f);
                std::vector<const MultiViewSample*> train, test;
                for (std::size_t i : out.train_idx) train.push_back(&pop.samples[i]);
                for (std::size_t i : out.test_idx) test.push_back(&pop.samples[i]);
                TrainConfig fold_cfg = cfg;
                fold_cfg.seed = cfg.seed + static_cast<std::uint64_t>(f);
                out.result = train_fold(train, test, fold_cfg);
                out.refined_test_centeredness =
                    mean_frobenius_distance(out.result.refined_template.matrix, test);
            } catch (...) {
                errors[f] = std::current_exception();
                return;
            }
        }
    };

    const int n_threads = std::max(1, std::min(jobs, k));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    double total = 0.0;
    for (const FoldOutcome& f : cv.folds) total += f.refined_test_centeredness;
    cv.mean_centeredness = total / static_cast<double>(k);
    return cv;
}

}  // namespace graphnorm
