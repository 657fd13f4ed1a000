#include "avb/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avb::ref {

namespace {

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

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("ref::matmul: shape mismatch");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    }
    return c;
}

ProbVector softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("ref::softmax: empty input");
    ProbVector out;
    out.p.assign(logits.begin(), logits.end());
    softmax_row(out.p);
    return out;
}

void row_softmax(Matrix& m) {
    for (int i = 0; i < m.rows; ++i) softmax_row(m.row(i));
}

void layer_norm_rows(Matrix& m, double eps) {
    for (int i = 0; i < m.rows; ++i) layer_norm_into(m.row(i), eps, m.row(i));
}

} // namespace avb::ref
