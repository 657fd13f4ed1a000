// Compares the OpenMP kernels against their serial reference twins:
// verifies bitwise-identical results, then reports throughput side by side.

#include "avb/reference.hpp"
#include "avb/rng.hpp"
#include "avb/tensor.hpp"

#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace avb;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal();
    return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

} // namespace

int main(int argc, char** argv) {
    int size = 384;
    int reps = 3;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--size" && i + 1 < argc) size = std::stoi(argv[++i]);
        else if (arg == "--reps" && i + 1 < argc) reps = std::stoi(argv[++i]);
        else if (arg == "--quick") { size = 96; reps = 2; }
        else {
            std::cerr << "usage: bench_kernels [--size N] [--reps R] [--quick]\n";
            return 2;
        }
    }

#ifdef _OPENMP
    std::cout << "threads: " << omp_get_max_threads() << "\n";
#else
    std::cout << "threads: 1 (OpenMP disabled)\n";
#endif
    std::cout << "size: " << size << "x" << size << ", reps: " << reps << "\n";

    Rng rng(7);
    const Matrix a = random_matrix(size, size, rng);
    const Matrix b = random_matrix(size, size, rng);

    int mismatches = 0;
    auto report = [&](const char* name, double serial_ms, double parallel_ms, bool equal) {
        std::cout << name << ": serial " << serial_ms << " ms, parallel " << parallel_ms
                  << " ms, speedup " << serial_ms / parallel_ms << "x, bitwise "
                  << (equal ? "equal" : "DIFFERENT") << "\n";
        if (!equal) ++mismatches;
    };

    {
        Matrix cs, cp;
        const double ts = time_ms([&] { cs = ref::matmul(a, b); }, reps);
        const double tp = time_ms([&] { cp = matmul(a, b); }, reps);
        report("matmul", ts, tp, bitwise_equal(cs, cp));
    }
    {
        Matrix ms = a, mp = a;
        const double ts = time_ms([&] { ms = a; ref::row_softmax(ms); }, reps);
        const double tp = time_ms([&] { mp = a; row_softmax(mp); }, reps);
        ms = a; ref::row_softmax(ms);
        mp = a; row_softmax(mp);
        report("row_softmax", ts, tp, bitwise_equal(ms, mp));
    }
    {
        Matrix ms = a, mp = a;
        const double ts = time_ms([&] { ms = a; ref::layer_norm_rows(ms, 1e-5); }, reps);
        const double tp = time_ms([&] { mp = a; layer_norm_rows(mp, 1e-5); }, reps);
        ms = a; ref::layer_norm_rows(ms, 1e-5);
        mp = a; layer_norm_rows(mp, 1e-5);
        report("layer_norm_rows", ts, tp, bitwise_equal(ms, mp));
    }

    if (mismatches) {
        std::cerr << mismatches << " kernel(s) diverged from the serial reference\n";
        return 1;
    }
    return 0;
}
