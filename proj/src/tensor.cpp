#include "avb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avb {

namespace {

// Below this many scalar ops a parallel region costs more than it saves.
constexpr size_t kParallelGrain = size_t(1) << 15;

void softmax_row(std::span<double> x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    const double inv = 1.0 / sum;
    for (double& v : x) v *= inv;
}

void check_finite(std::span<const double> x, const char* who) {
    if (x.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
    for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite input");
    }
}

} // namespace

void Matrix::push_row(std::span<const double> v) {
    if (rows == 0 && cols == 0) cols = int(v.size());
    if (int(v.size()) != cols) throw std::invalid_argument("Matrix::push_row: width mismatch");
    data.insert(data.end(), v.begin(), v.end());
    ++rows;
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

ProbVector softmax(std::span<const double> logits) {
    check_finite(logits, "softmax");
    ProbVector out;
    out.p.assign(logits.begin(), logits.end());
    softmax_row(out.p);
    return out;
}

void softmax_inplace(std::span<double> x) {
    softmax_row(x);
}

double log_sum_exp(std::span<const double> x) {
    check_finite(x, "log_sum_exp");
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - mx);
    return mx + std::log(sum);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: shape mismatch (" + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                                    std::to_string(b.cols) + ")");
    Matrix c(a.rows, b.cols);
    const size_t work = size_t(a.rows) * size_t(b.cols) * size_t(a.cols);
#pragma omp parallel for schedule(static) if (work >= kParallelGrain)
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    }
    return c;
}

std::vector<double> layer_norm(std::span<const double> x, double eps) {
    std::vector<double> out(x.size());
    layer_norm_into(x, eps, out);
    return out;
}

void layer_norm_into(std::span<const double> x, double eps, std::span<double> out) {
    if (x.empty()) throw std::invalid_argument("layer_norm: empty input");
    const size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= double(n);
    double var = 0.0;
    for (double v : x) {
        const double d = v - mean;
        var += d * d;
    }
    var /= double(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv;
}

void row_softmax(Matrix& m) {
    const size_t work = size_t(m.rows) * size_t(m.cols);
#pragma omp parallel for schedule(static) if (work >= kParallelGrain)
    for (int i = 0; i < m.rows; ++i) softmax_row(m.row(i));
}

void layer_norm_rows(Matrix& m, double eps) {
    const size_t work = size_t(m.rows) * size_t(m.cols);
#pragma omp parallel for schedule(static) if (work >= kParallelGrain)
    for (int i = 0; i < m.rows; ++i) layer_norm_into(m.row(i), eps, m.row(i));
}

int argmax(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("argmax: empty input");
    int best = 0;
    for (int i = 1; i < int(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace avb
