#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace avb {

// Dense row-major matrix of doubles. Everything downstream is float64:
// determinism outranks speed at this scale.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(size_t(r) * size_t(c), fill) {}

    double& operator()(int r, int c) { return data[size_t(r) * cols + c]; }
    double operator()(int r, int c) const { return data[size_t(r) * cols + c]; }

    std::span<double> row(int r) { return {data.data() + size_t(r) * cols, size_t(cols)}; }
    std::span<const double> row(int r) const { return {data.data() + size_t(r) * cols, size_t(cols)}; }

    void push_row(std::span<const double> v);
    bool all_finite() const;
};

// Discrete distribution over a vocabulary: entries >= 0, sum to 1 within 1e-9.
struct ProbVector {
    std::vector<double> p;

    size_t size() const { return p.size(); }
    double operator[](size_t i) const { return p[i]; }
};

// Numerically stable softmax (max subtraction). Throws std::invalid_argument
// on empty or non-finite input.
ProbVector softmax(std::span<const double> logits);

// In-place variant for hot loops; caller guarantees non-empty finite input.
void softmax_inplace(std::span<double> x);

// Stable log-sum-exp, same input contract as softmax.
double log_sum_exp(std::span<const double> x);

// a(m,k) * b(k,n). Fixed accumulation order per output element, parallel
// only across independent elements, so results are bit-reproducible for
// any thread count. Throws std::invalid_argument on shape mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Normalize x to zero mean / unit variance (population variance, +eps under
// the sqrt). eps == 0 is valid only when the variance is nonzero.
std::vector<double> layer_norm(std::span<const double> x, double eps);
void layer_norm_into(std::span<const double> x, double eps, std::span<double> out);

// Row-wise batched versions used by the batched forward pass.
void row_softmax(Matrix& m);
void layer_norm_rows(Matrix& m, double eps);

// Lowest index wins ties. Throws std::invalid_argument on empty input.
int argmax(std::span<const double> v);

} // namespace avb
