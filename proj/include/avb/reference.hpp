#pragma once

// Serial twins of the OpenMP kernels in tensor.hpp. Same loop nests, no
// pragmas. Tests assert bitwise equality against the parallel versions and
// bench_kernels compares throughput.

#include "avb/tensor.hpp"

namespace avb::ref {

Matrix matmul(const Matrix& a, const Matrix& b);
ProbVector softmax(std::span<const double> logits);
void row_softmax(Matrix& m);
void layer_norm_rows(Matrix& m, double eps);

} // namespace avb::ref
