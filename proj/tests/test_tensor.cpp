#include "avb/reference.hpp"
#include "avb/rng.hpp"
#include "avb/tensor.hpp"

#include <stdexcept>
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

using namespace avb;

namespace {

double sum(const ProbVector& p) {
    double s = 0.0;
    for (double v : p.p) s += v;
    return s;
}

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal() * scale;
    return m;
}

} // namespace

TEST_CASE("softmax symmetric inputs") {
    ProbVector p = softmax(std::vector<double>{0.0, 0.0});
    CHECK(p.p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.p[1] == doctest::Approx(0.5).epsilon(1e-12));

    ProbVector q = softmax(std::vector<double>{1000.0, 1000.0, 1000.0});
    for (double v : q.p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax hand-evaluated point") {
    // e^{ln 2} : e^0 = 2 : 1
    ProbVector p = softmax(std::vector<double>{std::log(2.0), 0.0});
    CHECK(std::fabs(p.p[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::fabs(p.p[1] - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("softmax rejects bad input") {
    CHECK_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax(std::vector<double>{std::nan("")}), std::invalid_argument);
}

TEST_CASE("softmax sums to one for long random inputs") {
    Rng rng(11);
    for (size_t n : {size_t(1), size_t(3), size_t(1000), size_t(100000)}) {
        std::vector<double> z(n);
        for (double& v : z) v = rng.normal() * 50.0;
        CHECK(std::fabs(sum(softmax(z)) - 1.0) < 1e-9);
    }
}

TEST_CASE("softmax shift invariance") {
    Rng rng(12);
    for (int rep = 0; rep < 50; ++rep) {
        const size_t n = 1 + rng.below(64);
        std::vector<double> z(n), zs(n);
        const double c = rng.normal() * 100.0;
        for (size_t i = 0; i < n; ++i) {
            z[i] = rng.normal() * 10.0;
            zs[i] = z[i] + c;
        }
        ProbVector a = softmax(z), b = softmax(zs);
        for (size_t i = 0; i < n; ++i) CHECK(std::fabs(a.p[i] - b.p[i]) < 1e-12);
    }
}

TEST_CASE("softmax preserves argmax; ties go to the lowest index") {
    Rng rng(13);
    for (int rep = 0; rep < 100; ++rep) {
        const size_t n = 2 + rng.below(32);
        std::vector<double> z(n);
        for (double& v : z) v = rng.normal() * 5.0;
        CHECK(argmax(softmax(z).p) == argmax(z));
    }
    CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0, 1.0}) == 1);
    CHECK(argmax(std::vector<double>{2.0, 2.0}) == 0);
}

TEST_CASE("log_sum_exp agrees with softmax") {
    Rng rng(14);
    std::vector<double> z(40);
    for (double& v : z) v = rng.normal() * 30.0;
    const double lse = log_sum_exp(z);
    ProbVector p = softmax(z);
    for (size_t i = 0; i < z.size(); ++i)
        CHECK(std::fabs(std::log(p.p[i]) - (z[i] - lse)) < 1e-9);
}

TEST_CASE("matmul hand-checked and identities") {
    Matrix a(2, 2);
    a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
    Matrix b(2, 1);
    b(0, 0) = 5; b(1, 0) = 6;
    Matrix c = matmul(a, b);
    CHECK(c.rows == 2);
    CHECK(c.cols == 1);
    CHECK(c(0, 0) == 17.0);
    CHECK(c(1, 0) == 39.0);

    Matrix eye(2, 2);
    eye(0, 0) = eye(1, 1) = 1.0;
    Matrix m = matmul(eye, a);
    CHECK(std::memcmp(m.data.data(), a.data.data(), a.data.size() * sizeof(double)) == 0);

    Matrix zero(2, 2);
    Matrix z = matmul(zero, a);
    for (double v : z.data) CHECK(v == 0.0);

    CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("layer_norm basics") {
    std::vector<double> c = layer_norm(std::vector<double>{3.0, 3.0, 3.0}, 1e-5);
    for (double v : c) CHECK(v == 0.0);

    std::vector<double> n = layer_norm(std::vector<double>{1.0, -1.0}, 0.0);
    CHECK(n[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n[1] == doctest::Approx(-1.0).epsilon(1e-12));

    // mean 1, population std 1
    std::vector<double> d = layer_norm(std::vector<double>{0.0, 2.0}, 0.0);
    CHECK(d[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(d[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parallel kernels match the serial reference bitwise") {
    Rng rng(15);
    const Matrix a = random_matrix(67, 54, rng);
    const Matrix b = random_matrix(54, 73, rng);

    Matrix c1 = matmul(a, b);
    Matrix c2 = ref::matmul(a, b);
    REQUIRE(c1.data.size() == c2.data.size());
    CHECK(std::memcmp(c1.data.data(), c2.data.data(), c1.data.size() * sizeof(double)) == 0);

    Matrix s1 = a, s2 = a;
    row_softmax(s1);
    ref::row_softmax(s2);
    CHECK(std::memcmp(s1.data.data(), s2.data.data(), s1.data.size() * sizeof(double)) == 0);

    Matrix l1 = a, l2 = a;
    layer_norm_rows(l1, 1e-5);
    ref::layer_norm_rows(l2, 1e-5);
    CHECK(std::memcmp(l1.data.data(), l2.data.data(), l1.data.size() * sizeof(double)) == 0);

    std::vector<double> z(300);
    for (double& v : z) v = rng.normal() * 4.0;
    ProbVector p1 = softmax(z), p2 = ref::softmax(z);
    CHECK(std::memcmp(p1.p.data(), p2.p.data(), p1.p.size() * sizeof(double)) == 0);
}

TEST_CASE("matmul is bit-reproducible across repeated runs") {
    Rng rng(16);
    const Matrix a = random_matrix(128, 128, rng); // large enough to take the parallel path
    const Matrix b = random_matrix(128, 128, rng);
    Matrix c1 = matmul(a, b);
    Matrix c2 = matmul(a, b);
    CHECK(std::memcmp(c1.data.data(), c2.data.data(), c1.data.size() * sizeof(double)) == 0);
}
