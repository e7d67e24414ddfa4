#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphnorm {

/// Thrown for malformed inputs: bad files, bad configs, shape mismatches,
/// violated preconditions. The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of doubles. Rank 1 or 2 everywhere in this
/// library; a flat rank-2 layout stands in for the conceptual rank-3
/// per-edge weight blocks.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count(shape), 0.0) {}

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }

    static Tensor vector(std::vector<double> v) {
        Tensor t;
        t.shape = {v.size()};
        t.data = std::move(v);
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols,
                         std::initializer_list<double> values) {
        Tensor t({rows, cols});
        if (values.size() != t.numel())
            throw ValidationError("matrix literal has wrong element count");
        std::size_t i = 0;
        for (double v : values) t.data[i++] = v;
        return t;
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::string shape_str(const Tensor& t) { return shape_str(t.shape); }

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Raw GEMM kernels. Loop orders are chosen so the innermost loop walks
// contiguous memory; these carry the bulk of the training flops.
// ---------------------------------------------------------------------------

/// C = A (m x k) * B (k x n)
inline Tensor mm_nn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw ValidationError("matmul shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.data.data() + i * n;
        const double* ai = a.data.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b.data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
    return c;
}

/// C = A (m x k) * B^T with B stored (n x k)
inline Tensor mm_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
        throw ValidationError("matmul_nt shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.data.data() + i * k;
        double* ci = c.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.data.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = acc;
        }
    }
    return c;
}

/// C = A^T * B with A stored (k x m), B stored (k x n)
inline Tensor mm_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
        throw ValidationError("matmul_tn shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a.data.data() + p * m;
        const double* bp = b.data.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ap[i];
            double* ci = c.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
    return c;
}

}  // namespace graphnorm
