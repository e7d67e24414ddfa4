#pragma once

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphnorm/autodiff.hpp"
#include "graphnorm/dataset.hpp"
#include "graphnorm/rng.hpp"
#include "graphnorm/tensor.hpp"

namespace graphnorm {

/// How the final per-dimension absolute differences collapse to one edge
/// weight: mean divides by the embedding width, sum does not.
enum class Readout { Mean, Sum };

inline std::string readout_name(Readout r) { return r == Readout::Mean ? "mean" : "sum"; }

inline Readout readout_from_name(const std::string& s) {
    if (s == "mean") return Readout::Mean;
    if (s == "sum") return Readout::Sum;
    throw ValidationError("unknown readout '" + s + "' (valid: mean, sum)");
}

/// One edge-conditioned convolution layer. The filter network is a
/// two-stage affine map with a ReLU between stages; its output reshapes
/// row-major to the (d_out x d_in) per-edge weight block.
struct LayerParams {
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    Tensor filter_w1;    // (hidden x n_v)
    Tensor filter_b1;    // (hidden)
    Tensor filter_w2;    // (d_out*d_in x hidden)
    Tensor filter_b2;    // (d_out*d_in)
    Tensor self_weight;  // (d_out x d_in), applied to the node's own embedding
    Tensor bias;         // (d_out)
};

struct ModelParams {
    std::size_t n_v = 0;
    std::size_t hidden = 32;
    std::array<std::size_t, 3> dims{36, 24, 5};  // d_1, d_2, d_3; d_0 = 1
    Readout readout = Readout::Mean;
    std::uint64_t seed = 0;
    std::vector<LayerParams> layers;  // exactly 3
};

/// Flat, stable enumeration of every learnable tensor. Order defines the
/// checkpoint layout and the optimizer state layout.
template <typename Model>
auto named_params(Model& m) {
    using TensorPtr = decltype(&m.layers[0].bias);
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        auto& lay = m.layers[l];
        out.emplace_back(p + "filter_w1", &lay.filter_w1);
        out.emplace_back(p + "filter_b1", &lay.filter_b1);
        out.emplace_back(p + "filter_w2", &lay.filter_w2);
        out.emplace_back(p + "filter_b2", &lay.filter_b2);
        out.emplace_back(p + "self_weight", &lay.self_weight);
        out.emplace_back(p + "bias", &lay.bias);
    }
    return out;
}

/// Weights uniform in +-1/sqrt(fan_in), biases zero, deterministic in the
/// seed.
inline ModelParams init_model(const std::array<std::size_t, 3>& dims, std::size_t n_v,
                              std::size_t hidden, std::uint64_t seed,
                              Readout readout = Readout::Mean) {
    for (std::size_t d : dims)
        if (d < 1) throw ValidationError("embedding dimensions must be >= 1");
    if (n_v < 1 || hidden < 1) throw ValidationError("n_v and hidden must be >= 1");

    ModelParams m;
    m.n_v = n_v;
    m.hidden = hidden;
    m.dims = dims;
    m.readout = readout;
    m.seed = seed;
    Rng rng(seed);

    auto uniform_init = [&rng](Tensor& t, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
    };

    std::size_t d_prev = 1;
    for (std::size_t l = 0; l < 3; ++l) {
        LayerParams lay;
        lay.d_in = d_prev;
        lay.d_out = dims[l];
        lay.filter_w1 = Tensor({hidden, n_v});
        lay.filter_b1 = Tensor({hidden});
        lay.filter_w2 = Tensor({dims[l] * d_prev, hidden});
        lay.filter_b2 = Tensor({dims[l] * d_prev});
        lay.self_weight = Tensor({dims[l], d_prev});
        lay.bias = Tensor({dims[l]});
        uniform_init(lay.filter_w1, n_v);
        uniform_init(lay.filter_w2, hidden);
        uniform_init(lay.self_weight, d_prev);
        m.layers.push_back(std::move(lay));
        d_prev = dims[l];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Sample context: per-sample constants reused across epochs.
// ---------------------------------------------------------------------------

struct SampleContext {
    const MultiViewSample* sample = nullptr;
    ad::EdgeIndex edges;    // complete graph, pairs with i < j
    Tensor edge_features;   // (n_edges x n_v), row e = cross-view vector of pair e
};

inline SampleContext make_context(const MultiViewSample& s) {
    if (s.n_r() < 2) throw ValidationError("samples need at least 2 nodes");
    SampleContext ctx;
    ctx.sample = &s;
    ctx.edges = ad::EdgeIndex::complete(s.n_r());
    ctx.edge_features = Tensor({ctx.edges.pairs.size(), s.n_v()});
    for (std::size_t e = 0; e < ctx.edges.pairs.size(); ++e) {
        const auto [i, j] = ctx.edges.pairs[e];
        for (std::size_t v = 0; v < s.n_v(); ++v) ctx.edge_features(e, v) = s.views[v](i, j);
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Forward model
// ---------------------------------------------------------------------------

struct LayerLeaves {
    ad::Value filter_w1, filter_b1, filter_w2, filter_b2, self_weight, bias;
};

inline LayerLeaves bind_layer(ad::Tape& t, const LayerParams& lay) {
    return LayerLeaves{t.leaf(lay.filter_w1), t.leaf(lay.filter_b1), t.leaf(lay.filter_w2),
                       t.leaf(lay.filter_b2), t.leaf(lay.self_weight), t.leaf(lay.bias)};
}

/// Batched filter network: edge feature rows (n_e x n_v) to flattened
/// per-edge weight blocks (n_e x d_out*d_in).
inline ad::Value filter_forward(ad::Tape& t, const LayerLeaves& lv, ad::Value edge_feats) {
    ad::Value h = t.relu(t.add_row(t.matmul_nt(edge_feats, lv.filter_w1), lv.filter_b1));
    return t.add_row(t.matmul_nt(h, lv.filter_w2), lv.filter_b2);
}

/// Single-edge filter evaluation, plain values. Reshapes the flat output
/// row-major to (d_out x d_in).
inline Tensor filter_forward(const LayerParams& lay, const std::vector<double>& e_ij) {
    if (e_ij.size() != lay.filter_w1.cols())
        throw ValidationError("edge feature length " + std::to_string(e_ij.size()) +
                              " does not match filter input " +
                              std::to_string(lay.filter_w1.cols()));
    std::vector<double> h(lay.filter_w1.rows(), 0.0);
    for (std::size_t r = 0; r < h.size(); ++r) {
        double acc = lay.filter_b1[r];
        for (std::size_t c = 0; c < e_ij.size(); ++c) acc += lay.filter_w1(r, c) * e_ij[c];
        h[r] = acc > 0.0 ? acc : 0.0;
    }
    Tensor theta({lay.d_out, lay.d_in});
    for (std::size_t r = 0; r < theta.numel(); ++r) {
        double acc = lay.filter_b2[r];
        for (std::size_t c = 0; c < h.size(); ++c) acc += lay.filter_w2(r, c) * h[c];
        theta[r] = acc;
    }
    return theta;
}

/// One convolution step:
///   v_i = W_self v_i + (1/|N(i)|) sum_{j != i} (Theta_ij v_j + b)
/// over the complete neighborhood N(i) of size n_r - 1. No activation
/// here; the caller inserts ReLU between layers.
inline ad::Value conv_layer(ad::Tape& t, const LayerLeaves& lv, ad::Value embeddings,
                            ad::Value edge_feats, const ad::EdgeIndex& edges,
                            std::size_t d_out, std::size_t d_in) {
    const double inv_neighbors = 1.0 / static_cast<double>(edges.n_r - 1);
    ad::Value theta_flat = filter_forward(t, lv, edge_feats);
    ad::Value messages =
        t.scale(t.edge_messages(theta_flat, embeddings, edges, d_out, d_in), inv_neighbors);
    ad::Value self_term = t.matmul_nt(embeddings, lv.self_weight);
    return t.add_row(t.add(self_term, messages), lv.bias);
}

/// Plain-value convolution written independently of the fused tape ops;
/// used as a cross-check oracle and by small diagnostics.
inline Tensor conv_layer(const LayerParams& lay, const Tensor& embeddings,
                         const MultiViewSample& sample) {
    const std::size_t n_r = sample.n_r();
    if (embeddings.rows() != n_r || embeddings.cols() != lay.d_in)
        throw ValidationError("conv_layer embedding shape " + shape_str(embeddings) +
                              " does not match layer (d_in " + std::to_string(lay.d_in) +
                              ")");
    Tensor out({n_r, lay.d_out});
    for (std::size_t i = 0; i < n_r; ++i) {
        for (std::size_t d = 0; d < lay.d_out; ++d) {
            double self = 0.0;
            for (std::size_t c = 0; c < lay.d_in; ++c)
                self += lay.self_weight(d, c) * embeddings(i, c);
            out(i, d) = self;
        }
        for (std::size_t j = 0; j < n_r; ++j) {
            if (j == i) continue;
            const Tensor theta = filter_forward(lay, cross_view_features(sample, i, j));
            for (std::size_t d = 0; d < lay.d_out; ++d) {
                double acc = lay.bias[d];
                for (std::size_t c = 0; c < lay.d_in; ++c)
                    acc += theta(d, c) * embeddings(j, c);
                out(i, d) += acc / static_cast<double>(n_r - 1);
            }
        }
    }
    return out;
}

struct ForwardPass {
    std::vector<ad::Value> param_leaves;  // named_params order
    ad::Value embeddings;                 // (n_r x d_3)
    ad::Value template_matrix;            // (n_r x n_r)
};

/// Forward pass over already-recorded parameter leaves (named_params
/// order, six per layer). Lets callers differentiate through the model
/// with leaves they control.
inline ForwardPass forward_from_leaves(ad::Tape& t, const ModelParams& m,
                                       const std::vector<ad::Value>& param_leaves,
                                       const SampleContext& ctx) {
    if (m.layers.size() != 3) throw ValidationError("model must have exactly 3 layers");
    if (param_leaves.size() != 6 * m.layers.size())
        throw ValidationError("expected " + std::to_string(6 * m.layers.size()) +
                              " parameter leaves, got " +
                              std::to_string(param_leaves.size()));
    if (ctx.edge_features.cols() != m.n_v)
        throw ValidationError("sample has " + std::to_string(ctx.edge_features.cols()) +
                              " views but model expects " + std::to_string(m.n_v));

    ForwardPass fp;
    fp.param_leaves = param_leaves;

    Tensor ones({ctx.edges.n_r, 1});
    for (double& v : ones.data) v = 1.0;
    ad::Value embed = t.leaf(std::move(ones));
    ad::Value edge_feats = t.leaf(ctx.edge_features);

    for (std::size_t l = 0; l < 3; ++l) {
        const LayerLeaves lv{param_leaves[6 * l + 0], param_leaves[6 * l + 1],
                             param_leaves[6 * l + 2], param_leaves[6 * l + 3],
                             param_leaves[6 * l + 4], param_leaves[6 * l + 5]};
        embed = conv_layer(t, lv, embed, edge_feats, ctx.edges, m.layers[l].d_out,
                           m.layers[l].d_in);
        if (l < 2) embed = t.relu(embed);
    }

    const double scale =
        m.readout == Readout::Mean ? 1.0 / static_cast<double>(m.dims[2]) : 1.0;
    fp.embeddings = embed;
    fp.template_matrix = t.pairwise_abs_diff(embed, scale);
    return fp;
}

/// Full model: all-ones initial node features, three convolutions with
/// ReLU between them (none after the last), then the pairwise
/// absolute-difference readout. The output matrix is symmetric,
/// nonnegative, and zero-diagonal by construction.
inline ForwardPass forward(ad::Tape& t, const ModelParams& m, const SampleContext& ctx) {
    std::vector<ad::Value> leaves;
    leaves.reserve(6 * m.layers.size());
    for (const LayerParams& lay : m.layers) {
        LayerLeaves lv = bind_layer(t, lay);
        leaves.insert(leaves.end(), {lv.filter_w1, lv.filter_b1, lv.filter_w2,
                                     lv.filter_b2, lv.self_weight, lv.bias});
    }
    return forward_from_leaves(t, m, leaves, ctx);
}

// ---------------------------------------------------------------------------
// Template
// ---------------------------------------------------------------------------

struct Template {
    Tensor matrix;
};

inline void validate_template(const Template& t) {
    if (t.matrix.rank() != 2 || t.matrix.rows() != t.matrix.cols())
        throw ValidationError("template must be square, got " + shape_str(t.matrix));
    const std::size_t n = t.matrix.rows();
    for (std::size_t i = 0; i < n; ++i) {
        if (t.matrix(i, i) != 0.0) throw ValidationError("template diagonal must be zero");
        for (std::size_t j = 0; j < n; ++j) {
            const double v = t.matrix(i, j);
            if (!std::isfinite(v)) throw ValidationError("template has non-finite entry");
            if (v < 0.0) throw ValidationError("template has negative entry");
            if (t.matrix(j, i) != v) throw ValidationError("template must be symmetric");
        }
    }
}

/// Convenience: one subject through the trained model on a private tape.
inline Template forward_template(const ModelParams& m, const MultiViewSample& s) {
    ad::Tape tape;
    SampleContext ctx = make_context(s);
    ForwardPass fp = forward(tape, m, ctx);
    return Template{tape.value(fp.template_matrix)};
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON with a config echo and every named tensor, fields in
// a fixed order.
// ---------------------------------------------------------------------------

inline void save_model(const ModelParams& m, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["config"] = {{"dims", m.dims},
                   {"n_v", m.n_v},
                   {"hidden", m.hidden},
                   {"seed", m.seed},
                   {"readout", readout_name(m.readout)}};
    auto& params = j["params"] = nlohmann::ordered_json::object();
    for (const auto& [name, tensor] : named_params(m))
        params[name] = {{"shape", tensor->shape}, {"data", tensor->data}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << j.dump(2) << '\n';
}

inline ModelParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    const auto& cfg = j.at("config");
    ModelParams m = init_model(cfg.at("dims").get<std::array<std::size_t, 3>>(),
                               cfg.at("n_v").get<std::size_t>(),
                               cfg.at("hidden").get<std::size_t>(),
                               cfg.at("seed").get<std::uint64_t>(),
                               readout_from_name(cfg.at("readout").get<std::string>()));
    for (auto& [name, tensor] : named_params(m)) {
        const auto& entry = j.at("params").at(name);
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != tensor->shape)
            throw ValidationError("checkpoint tensor '" + name + "' has shape " +
                                  shape_str(shape) + ", expected " + shape_str(*tensor));
        tensor->data = entry.at("data").get<std::vector<double>>();
        if (!all_finite(*tensor))
            throw ValidationError("checkpoint tensor '" + name + "' has non-finite values");
    }
    return m;
}

}  // namespace graphnorm
