#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "graphnorm/tensor.hpp"

namespace graphnorm::ad {

/// Undirected edge list over n_r nodes, pairs stored with i < j.
/// Edge-conditioned weights are shared across the two directions of a
/// pair, so fused ops walk this list once and scatter both ways.
struct EdgeIndex {
    std::size_t n_r = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;

    static EdgeIndex complete(std::size_t n_r) {
        EdgeIndex e;
        e.n_r = n_r;
        e.pairs.reserve(n_r * (n_r - 1) / 2);
        for (std::size_t i = 0; i + 1 < n_r; ++i)
            for (std::size_t j = i + 1; j < n_r; ++j) e.pairs.emplace_back(i, j);
        return e;
    }
};

struct Value {
    int idx = -1;
};

/// Reverse-mode tape over dense tensors. The graph is recorded
/// dynamically: every op computes its value eagerly and pushes one node;
/// backward() walks the nodes in reverse creation order, which is a
/// reverse topological order because parents always precede children.
///
/// Subgradient conventions: d relu(x)/dx = 0 at x = 0, d|x|/dx = 0 at
/// x = 0, and the Frobenius norm has zero gradient at the zero tensor.
///
/// A tape is confined to one thread; independent tapes may run
/// concurrently.
class Tape {
    enum class Op {
        Leaf,
        MatMul,       // a (m x k) * b (k x n)
        MatMulNT,     // a (m x k) * b^T, b stored (n x k)
        Add,
        AddRow,       // matrix + broadcast row vector
        AddConst,
        Scale,
        Mul,
        Div,
        Sub,
        Relu,
        Abs,
        SumAll,
        SumAxis,
        Mean,
        FrobNorm,
        Log2,
        Broadcast,    // scalar -> arbitrary shape
        Reshape,
        Concat,       // along axis 0
        IndexSelect,  // rows by index list
        EdgeMessages, // fused per-edge weight matrix x neighbor embedding
        PairwiseAbsDiff,
    };

    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        Tensor value;
        double c0 = 0.0;  // scalar constant / scale
        int axis = -1;
        std::vector<std::size_t> indices;
        EdgeIndex edges;  // owned copy; tiny next to the tensors
        std::size_t d_out = 0, d_in = 0;
    };

public:
    Value leaf(Tensor t) {
        Node n;
        n.op = Op::Leaf;
        n.value = std::move(t);
        return push(std::move(n));
    }

    Value matmul(Value a, Value b) {
        Node n;
        n.op = Op::MatMul;
        n.a = a.idx;
        n.b = b.idx;
        n.value = mm_nn(val(a), val(b));
        return push(std::move(n));
    }

    Value matmul_nt(Value a, Value b) {
        Node n;
        n.op = Op::MatMulNT;
        n.a = a.idx;
        n.b = b.idx;
        n.value = mm_nt(val(a), val(b));
        return push(std::move(n));
    }

    Value add(Value a, Value b) { return binary_same_shape(Op::Add, a, b); }
    Value sub(Value a, Value b) { return binary_same_shape(Op::Sub, a, b); }
    Value mul(Value a, Value b) { return binary_same_shape(Op::Mul, a, b); }
    Value div(Value a, Value b) { return binary_same_shape(Op::Div, a, b); }

    Value add_row(Value m, Value row) {
        const Tensor& a = val(m);
        const Tensor& r = val(row);
        if (a.rank() != 2 || r.rank() != 1 || a.cols() != r.numel())
            throw ValidationError("add_row shape mismatch: " + shape_str(a) + " vs " +
                                  shape_str(r));
        Node n;
        n.op = Op::AddRow;
        n.a = m.idx;
        n.b = row.idx;
        n.value = a;
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) n.value(i, j) += r[j];
        return push(std::move(n));
    }

    Value add_const(Value a, double c) {
        Node n;
        n.op = Op::AddConst;
        n.a = a.idx;
        n.c0 = c;
        n.value = val(a);
        for (double& v : n.value.data) v += c;
        return push(std::move(n));
    }

    Value scale(Value a, double c) {
        Node n;
        n.op = Op::Scale;
        n.a = a.idx;
        n.c0 = c;
        n.value = val(a);
        for (double& v : n.value.data) v *= c;
        return push(std::move(n));
    }

    Value relu(Value a) {
        Node n;
        n.op = Op::Relu;
        n.a = a.idx;
        n.value = val(a);
        for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
        return push(std::move(n));
    }

    Value abs(Value a) {
        Node n;
        n.op = Op::Abs;
        n.a = a.idx;
        n.value = val(a);
        for (double& v : n.value.data) v = std::fabs(v);
        return push(std::move(n));
    }

    Value sum(Value a) {
        Node n;
        n.op = Op::SumAll;
        n.a = a.idx;
        double s = 0.0;
        for (double v : val(a).data) s += v;
        n.value = Tensor::scalar(s);
        return push(std::move(n));
    }

    /// Rank-2 input only. axis 0 sums over rows (result length cols);
    /// axis 1 sums over columns (result length rows).
    Value sum_axis(Value a, int axis) {
        const Tensor& t = val(a);
        if (t.rank() != 2 || (axis != 0 && axis != 1))
            throw ValidationError("sum_axis needs a rank-2 input and axis 0 or 1, got " +
                                  shape_str(t));
        Node n;
        n.op = Op::SumAxis;
        n.a = a.idx;
        n.axis = axis;
        n.value = Tensor({axis == 0 ? t.cols() : t.rows()});
        for (std::size_t i = 0; i < t.rows(); ++i)
            for (std::size_t j = 0; j < t.cols(); ++j) n.value[axis == 0 ? j : i] += t(i, j);
        return push(std::move(n));
    }

    Value mean(Value a) {
        Node n;
        n.op = Op::Mean;
        n.a = a.idx;
        double s = 0.0;
        for (double v : val(a).data) s += v;
        n.value = Tensor::scalar(s / static_cast<double>(val(a).numel()));
        return push(std::move(n));
    }

    Value frobenius_norm(Value a) {
        Node n;
        n.op = Op::FrobNorm;
        n.a = a.idx;
        double s = 0.0;
        for (double v : val(a).data) s += v * v;
        n.value = Tensor::scalar(std::sqrt(s));
        return push(std::move(n));
    }

    Value log2(Value a) {
        Node n;
        n.op = Op::Log2;
        n.a = a.idx;
        n.value = val(a);
        for (double& v : n.value.data) v = std::log2(v);
        return push(std::move(n));
    }

    Value broadcast(Value scalar, std::vector<std::size_t> shape) {
        if (val(scalar).numel() != 1)
            throw ValidationError("broadcast expects a scalar source, got " +
                                  shape_str(val(scalar)));
        Node n;
        n.op = Op::Broadcast;
        n.a = scalar.idx;
        n.value = Tensor(std::move(shape));
        const double v = val(scalar)[0];
        for (double& x : n.value.data) x = v;
        return push(std::move(n));
    }

    Value reshape(Value a, std::vector<std::size_t> shape) {
        if (Tensor::count(shape) != val(a).numel())
            throw ValidationError("reshape element count mismatch: " + shape_str(val(a)) +
                                  " vs " + shape_str(shape));
        Node n;
        n.op = Op::Reshape;
        n.a = a.idx;
        n.value = val(a);
        n.value.shape = std::move(shape);
        return push(std::move(n));
    }

    Value concat(Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (ta.rank() != tb.rank() ||
            (ta.rank() == 2 && ta.cols() != tb.cols()) || ta.rank() > 2)
            throw ValidationError("concat shape mismatch: " + shape_str(ta) + " vs " +
                                  shape_str(tb));
        Node n;
        n.op = Op::Concat;
        n.a = a.idx;
        n.b = b.idx;
        std::vector<std::size_t> shape = ta.shape;
        shape[0] += tb.shape[0];
        n.value = Tensor(std::move(shape));
        std::copy(ta.data.begin(), ta.data.end(), n.value.data.begin());
        std::copy(tb.data.begin(), tb.data.end(),
                  n.value.data.begin() + static_cast<std::ptrdiff_t>(ta.numel()));
        return push(std::move(n));
    }

    Value index_select(Value a, std::vector<std::size_t> rows) {
        const Tensor& t = val(a);
        if (t.rank() != 2)
            throw ValidationError("index_select needs a rank-2 input, got " + shape_str(t));
        for (std::size_t r : rows)
            if (r >= t.rows())
                throw ValidationError("index_select row out of range");
        Node n;
        n.op = Op::IndexSelect;
        n.a = a.idx;
        n.value = Tensor({rows.size(), t.cols()});
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < t.cols(); ++j) n.value(i, j) = t(rows[i], j);
        n.indices = std::move(rows);
        return push(std::move(n));
    }

    /// Aggregated neighbor messages: theta_flat holds one (d_out x d_in)
    /// block per undirected edge, row-major; node_embed is (n_r x d_in).
    /// Output row i is the raw sum over j != i of Theta_ij * v_j
    /// (unscaled; callers divide by the neighborhood size).
    Value edge_messages(Value theta_flat, Value node_embed, const EdgeIndex& edges,
                        std::size_t d_out, std::size_t d_in) {
        const Tensor& th = val(theta_flat);
        const Tensor& v = val(node_embed);
        if (th.rank() != 2 || th.rows() != edges.pairs.size() || th.cols() != d_out * d_in)
            throw ValidationError("edge_messages theta shape mismatch: " + shape_str(th));
        if (v.rank() != 2 || v.rows() != edges.n_r || v.cols() != d_in)
            throw ValidationError("edge_messages embedding shape mismatch: " + shape_str(v));
        Node n;
        n.op = Op::EdgeMessages;
        n.a = theta_flat.idx;
        n.b = node_embed.idx;
        n.edges = edges;
        n.d_out = d_out;
        n.d_in = d_in;
        n.value = Tensor({edges.n_r, d_out});
        for (std::size_t e = 0; e < edges.pairs.size(); ++e) {
            const auto [i, j] = edges.pairs[e];
            const double* te = th.data.data() + e * d_out * d_in;
            const double* vi = v.data.data() + i * d_in;
            const double* vj = v.data.data() + j * d_in;
            double* mi = n.value.data.data() + i * d_out;
            double* mj = n.value.data.data() + j * d_out;
            for (std::size_t d = 0; d < d_out; ++d) {
                const double* td = te + d * d_in;
                double acc_i = 0.0, acc_j = 0.0;
                for (std::size_t c = 0; c < d_in; ++c) {
                    acc_i += td[c] * vj[c];
                    acc_j += td[c] * vi[c];
                }
                mi[d] += acc_i;
                mj[d] += acc_j;
            }
        }
        return push(std::move(n));
    }

    /// Readout: T[i][j] = out_scale * sum_d |v_i[d] - v_j[d]|, zero
    /// diagonal. out_scale is 1/d for the mean variant, 1 for the sum
    /// variant.
    Value pairwise_abs_diff(Value embed, double out_scale) {
        const Tensor& v = val(embed);
        if (v.rank() != 2)
            throw ValidationError("pairwise_abs_diff needs a rank-2 input, got " +
                                  shape_str(v));
        Node n;
        n.op = Op::PairwiseAbsDiff;
        n.a = embed.idx;
        n.c0 = out_scale;
        const std::size_t nr = v.rows(), d = v.cols();
        n.value = Tensor({nr, nr});
        for (std::size_t i = 0; i + 1 < nr; ++i)
            for (std::size_t j = i + 1; j < nr; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += std::fabs(v(i, c) - v(j, c));
                s *= out_scale;
                n.value(i, j) = s;
                n.value(j, i) = s;
            }
        return push(std::move(n));
    }

    const Tensor& value(Value v) const { return nodes_[check(v)].value; }

    double scalar_value(Value v) const {
        const Tensor& t = value(v);
        if (t.numel() != 1)
            throw ValidationError("scalar_value on non-scalar node " + shape_str(t));
        return t[0];
    }

    /// Gradient of the last backward() root w.r.t. node v.
    const Tensor& grad(Value v) const {
        if (grads_.size() != nodes_.size())
            throw ValidationError("grad() called before backward()");
        return grads_[check(v)];
    }

    std::size_t size() const { return nodes_.size(); }

    void reset() {
        nodes_.clear();
        grads_.clear();
    }

    /// Reverse pass from a scalar root. Gradients accumulate (a node
    /// consumed twice receives both contributions).
    void backward(Value root) {
        const Tensor& rv = value(root);
        if (rv.numel() != 1)
            throw ValidationError("backward requires a scalar root, got " + shape_str(rv));
        grads_.clear();
        grads_.reserve(nodes_.size());
        for (const Node& n : nodes_) grads_.emplace_back(n.value.shape);
        grads_[root.idx][0] = 1.0;

        for (std::size_t ni = nodes_.size(); ni-- > 0;) {
            const Node& n = nodes_[ni];
            const Tensor& g = grads_[ni];
            switch (n.op) {
                case Op::Leaf:
                    break;
                case Op::MatMul: {
                    accumulate(n.a, mm_nt(g, nodes_[n.b].value));
                    accumulate(n.b, mm_tn(nodes_[n.a].value, g));
                    break;
                }
                case Op::MatMulNT: {
                    accumulate(n.a, mm_nn(g, nodes_[n.b].value));
                    accumulate(n.b, mm_tn(g, nodes_[n.a].value));
                    break;
                }
                case Op::Add:
                    add_into(n.a, g.data);
                    add_into(n.b, g.data);
                    break;
                case Op::Sub: {
                    add_into(n.a, g.data);
                    Tensor& gb = grads_[n.b];
                    for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
                    break;
                }
                case Op::Mul: {
                    Tensor& ga = grads_[n.a];
                    Tensor& gb = grads_[n.b];
                    const Tensor& av = nodes_[n.a].value;
                    const Tensor& bv = nodes_[n.b].value;
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        ga[i] += g[i] * bv[i];
                        gb[i] += g[i] * av[i];
                    }
                    break;
                }
                case Op::Div: {
                    Tensor& ga = grads_[n.a];
                    Tensor& gb = grads_[n.b];
                    const Tensor& av = nodes_[n.a].value;
                    const Tensor& bv = nodes_[n.b].value;
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        ga[i] += g[i] / bv[i];
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                    break;
                }
                case Op::AddRow: {
                    add_into(n.a, g.data);
                    Tensor& gr = grads_[n.b];
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
                    break;
                }
                case Op::AddConst:
                    add_into(n.a, g.data);
                    break;
                case Op::Scale: {
                    Tensor& ga = grads_[n.a];
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += n.c0 * g[i];
                    break;
                }
                case Op::Relu: {
                    Tensor& ga = grads_[n.a];
                    const Tensor& av = nodes_[n.a].value;
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        if (av[i] > 0.0) ga[i] += g[i];
                    break;
                }
                case Op::Abs: {
                    Tensor& ga = grads_[n.a];
                    const Tensor& av = nodes_[n.a].value;
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        if (av[i] > 0.0)
                            ga[i] += g[i];
                        else if (av[i] < 0.0)
                            ga[i] -= g[i];
                    }
                    break;
                }
                case Op::SumAll: {
                    Tensor& ga = grads_[n.a];
                    for (double& v : ga.data) v += g[0];
                    break;
                }
                case Op::SumAxis: {
                    Tensor& ga = grads_[n.a];
                    for (std::size_t i = 0; i < ga.rows(); ++i)
                        for (std::size_t j = 0; j < ga.cols(); ++j)
                            ga(i, j) += g[n.axis == 0 ? j : i];
                    break;
                }
                case Op::Mean: {
                    Tensor& ga = grads_[n.a];
                    const double s = g[0] / static_cast<double>(ga.numel());
                    for (double& v : ga.data) v += s;
                    break;
                }
                case Op::FrobNorm: {
                    const double f = n.value[0];
                    if (f > 0.0) {
                        Tensor& ga = grads_[n.a];
                        const Tensor& av = nodes_[n.a].value;
                        const double s = g[0] / f;
                        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += s * av[i];
                    }
                    break;
                }
                case Op::Log2: {
                    Tensor& ga = grads_[n.a];
                    const Tensor& av = nodes_[n.a].value;
                    constexpr double inv_ln2 = 1.4426950408889634074;
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        ga[i] += g[i] * inv_ln2 / av[i];
                    break;
                }
                case Op::Broadcast: {
                    double s = 0.0;
                    for (double v : g.data) s += v;
                    grads_[n.a][0] += s;
                    break;
                }
                case Op::Reshape:
                    add_into(n.a, g.data);
                    break;
                case Op::Concat: {
                    Tensor& ga = grads_[n.a];
                    Tensor& gb = grads_[n.b];
                    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[i];
                    for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += g[ga.numel() + i];
                    break;
                }
                case Op::IndexSelect: {
                    Tensor& ga = grads_[n.a];
                    const std::size_t c = ga.cols();
                    for (std::size_t i = 0; i < n.indices.size(); ++i)
                        for (std::size_t j = 0; j < c; ++j) ga(n.indices[i], j) += g(i, j);
                    break;
                }
                case Op::EdgeMessages: {
                    Tensor& gth = grads_[n.a];
                    Tensor& gv = grads_[n.b];
                    const Tensor& th = nodes_[n.a].value;
                    const Tensor& v = nodes_[n.b].value;
                    const std::size_t dO = n.d_out, dI = n.d_in;
                    for (std::size_t e = 0; e < n.edges.pairs.size(); ++e) {
                        const auto [i, j] = n.edges.pairs[e];
                        const double* te = th.data.data() + e * dO * dI;
                        double* gte = gth.data.data() + e * dO * dI;
                        const double* vi = v.data.data() + i * dI;
                        const double* vj = v.data.data() + j * dI;
                        double* gvi = gv.data.data() + i * dI;
                        double* gvj = gv.data.data() + j * dI;
                        const double* gi = g.data.data() + i * dO;
                        const double* gj = g.data.data() + j * dO;
                        for (std::size_t d = 0; d < dO; ++d) {
                            const double gid = gi[d], gjd = gj[d];
                            const double* td = te + d * dI;
                            double* gtd = gte + d * dI;
                            for (std::size_t c = 0; c < dI; ++c) {
                                gtd[c] += gid * vj[c] + gjd * vi[c];
                                gvj[c] += gid * td[c];
                                gvi[c] += gjd * td[c];
                            }
                        }
                    }
                    break;
                }
                case Op::PairwiseAbsDiff: {
                    Tensor& gv = grads_[n.a];
                    const Tensor& v = nodes_[n.a].value;
                    const std::size_t nr = v.rows(), d = v.cols();
                    for (std::size_t i = 0; i + 1 < nr; ++i)
                        for (std::size_t j = i + 1; j < nr; ++j) {
                            const double ge = n.c0 * (g(i, j) + g(j, i));
                            if (ge == 0.0) continue;
                            for (std::size_t c = 0; c < d; ++c) {
                                const double diff = v(i, c) - v(j, c);
                                if (diff > 0.0) {
                                    gv(i, c) += ge;
                                    gv(j, c) -= ge;
                                } else if (diff < 0.0) {
                                    gv(i, c) -= ge;
                                    gv(j, c) += ge;
                                }
                            }
                        }
                    break;
                }
            }
        }
    }

private:
    Value push(Node&& n) {
        nodes_.push_back(std::move(n));
        return Value{static_cast<int>(nodes_.size()) - 1};
    }

    int check(Value v) const {
        if (v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
            throw ValidationError("value handle does not belong to this tape");
        return v.idx;
    }

    const Tensor& val(Value v) const { return nodes_[check(v)].value; }

    Value binary_same_shape(Op op, Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (!same_shape(ta, tb))
            throw ValidationError("elementwise op shape mismatch: " + shape_str(ta) +
                                  " vs " + shape_str(tb));
        Node n;
        n.op = op;
        n.a = a.idx;
        n.b = b.idx;
        n.value = ta;
        switch (op) {
            case Op::Add:
                for (std::size_t i = 0; i < tb.numel(); ++i) n.value[i] += tb[i];
                break;
            case Op::Sub:
                for (std::size_t i = 0; i < tb.numel(); ++i) n.value[i] -= tb[i];
                break;
            case Op::Mul:
                for (std::size_t i = 0; i < tb.numel(); ++i) n.value[i] *= tb[i];
                break;
            case Op::Div:
                for (std::size_t i = 0; i < tb.numel(); ++i) n.value[i] /= tb[i];
                break;
            default:
                throw ValidationError("not an elementwise op");
        }
        return push(std::move(n));
    }

    void accumulate(int idx, const Tensor& t) { add_into(idx, t.data); }

    void add_into(int idx, const std::vector<double>& src) {
        Tensor& dst = grads_[idx];
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

/// Builds a scalar expression from leaf parameters on a fresh tape.
using TapeFunction = std::function<Value(Tape&, const std::vector<Value>&)>;

/// Max over all parameter entries of
///   |analytic - central_difference| / max(1, |central_difference|)
/// with the central difference (f(p+eps) - f(p-eps)) / (2 eps).
inline double gradient_check(const TapeFunction& f, std::vector<Tensor> params,
                             double eps) {
    if (eps < 1e-7 || eps > 1e-3)
        throw ValidationError("gradient_check eps must lie in [1e-7, 1e-3]");

    auto evaluate = [&](const std::vector<Tensor>& p) {
        Tape tape;
        std::vector<Value> leaves;
        leaves.reserve(p.size());
        for (const Tensor& t : p) leaves.push_back(tape.leaf(t));
        const double v = tape.scalar_value(f(tape, leaves));
        if (!std::isfinite(v)) throw ValidationError("gradient_check: non-finite evaluation");
        return v;
    };

    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(params.size());
    for (const Tensor& t : params) leaves.push_back(tape.leaf(t));
    Value root = f(tape, leaves);
    if (!std::isfinite(tape.scalar_value(root)))
        throw ValidationError("gradient_check: non-finite evaluation");
    tape.backward(root);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor analytic = tape.grad(leaves[pi]);
        for (std::size_t i = 0; i < params[pi].numel(); ++i) {
            const double saved = params[pi][i];
            params[pi][i] = saved + eps;
            const double hi = evaluate(params);
            params[pi][i] = saved - eps;
            const double lo = evaluate(params);
            params[pi][i] = saved;
            const double numeric = (hi - lo) / (2.0 * eps);
            const double rel =
                std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace graphnorm::ad
