#include "avb/checks.hpp"
#include "avb/risk.hpp"
#include "avb/rng.hpp"

#include <stdexcept>
#include <doctest.h>

#include <cmath>

using namespace avb;

TEST_CASE("grounding_vector is the elementwise max of softmaxed rows") {
    // softmax outputs [0.7, 0.3] and [0.2, 0.8]
    std::vector<std::vector<double>> logits = {
        {std::log(0.7), std::log(0.3)},
        {std::log(0.2), std::log(0.8)},
    };
    GroundingVector g = grounding_vector(logits);
    CHECK(g.g[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(g.g[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("grounding_vector single position and permutation invariance") {
    std::vector<double> h = {0.3, -1.2, 2.0, 0.0};
    GroundingVector g1 = grounding_vector({h});
    ProbVector p = softmax(h);
    for (size_t i = 0; i < h.size(); ++i) CHECK(g1.g[i] == p.p[i]);

    std::vector<double> h2 = {1.0, 1.5, -0.5, 0.25};
    GroundingVector a = grounding_vector({h, h2});
    GroundingVector b = grounding_vector({h2, h});
    for (size_t i = 0; i < h.size(); ++i) CHECK(a.g[i] == b.g[i]);

    CHECK_THROWS_AS(grounding_vector({}), std::invalid_argument);
}

TEST_CASE("grounding_vector entries stay in (0, 1]") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<std::vector<double>> logits(1 + rng.below(4));
        for (auto& h : logits) {
            h.resize(8);
            for (double& v : h) v = rng.normal() * 10.0;
        }
        GroundingVector g = grounding_vector(logits);
        for (double v : g.g) {
            CHECK(v > 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("normalized_entropy endpoints") {
    ProbVector uniform{std::vector<double>(4, 0.25)};
    CHECK(std::fabs(normalized_entropy(uniform) - 1.0) < 1e-12);

    ProbVector onehot{{0.0, 1.0, 0.0}};
    CHECK(normalized_entropy(onehot) == 0.0);

    // two equal halves over V=4: ln 2 / ln 4 = 1/2
    ProbVector half{{0.5, 0.5, 0.0, 0.0}};
    CHECK(std::fabs(normalized_entropy(half) - 0.5) < 1e-12);

    CHECK_THROWS_AS(normalized_entropy(ProbVector{{1.0}}), std::invalid_argument);
}

TEST_CASE("grounding_score argmax lookup and tie rule") {
    GroundingVector g{{0.2, 0.9, 0.5}};
    CHECK(grounding_score(g, std::vector<double>{1.0, 3.0, 2.0}) == 0.9);
    CHECK(grounding_score(g, std::vector<double>{7.0, 7.0, 7.0}) == 0.2);
    CHECK(grounding_score(g, std::vector<double>{0.0, 0.0, 5.0}) == 0.5);
    CHECK_THROWS_AS(grounding_score(g, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("grounding_score is invariant to positive rescaling of the logits") {
    Rng rng(32);
    for (int rep = 0; rep < 200; ++rep) {
        const size_t n = 2 + rng.below(16);
        std::vector<double> z(n), zs(n);
        const double scale = 0.05 + rng.uniform() * 20.0;
        GroundingVector g;
        g.g.resize(n);
        for (size_t i = 0; i < n; ++i) {
            z[i] = rng.normal() * 3.0;
            zs[i] = z[i] * scale;
            g.g[i] = 1e-6 + rng.uniform() * (1.0 - 1e-6);
        }
        CHECK(grounding_score(g, z) == grounding_score(g, zs));
    }
}

TEST_CASE("vge limits and hand-evaluated point") {
    CHECK(vge(0.37, 0.9, 1.0) == 0.37);
    CHECK(vge(0.37, 0.9, 0.0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(vge(0.4, 0.9, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(vge(0.5, 0.5, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(vge(1.5, 0.5, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(vge(0.5, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("risk_score clamps") {
    CHECK(risk_score(0.0, 0.5) == 0.0);
    CHECK(risk_score(0.7, 0.5) == 1.0);
    CHECK(risk_score(0.5, 0.5) == 1.0);
    CHECK(risk_score(0.25, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(risk_score(0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(risk_score(0.5, -1.0), std::invalid_argument);
}

TEST_CASE("boost_strength endpoints are exact") {
    for (double m : {1.0, 1.1, 1.3, 1.7, 2.0}) {
        CHECK(boost_strength(0.0, m) == 1.0);
        CHECK(boost_strength(1.0, m) == m);
    }
    CHECK(boost_strength(0.5, 1.1) == doctest::Approx(1.05).epsilon(1e-12));
    CHECK_THROWS_AS(boost_strength(-0.1, 1.1), std::invalid_argument);
    CHECK_THROWS_AS(boost_strength(0.5, 0.9), std::invalid_argument);
}

TEST_CASE("vge is monotone in h_bar and in -g_t") {
    Rng rng(33);
    for (int rep = 0; rep < 2000; ++rep) {
        const double a = rng.uniform();
        const double g = 1e-9 + rng.uniform() * (1.0 - 1e-9);
        double h1 = rng.uniform(), h2 = rng.uniform();
        if (h1 > h2) std::swap(h1, h2);
        CHECK(vge(h1, g, a) <= vge(h2, g, a));

        const double h = rng.uniform();
        double g1 = 1e-9 + rng.uniform() * (1.0 - 1e-9);
        double g2 = 1e-9 + rng.uniform() * (1.0 - 1e-9);
        if (g1 > g2) std::swap(g1, g2);
        CHECK(vge(h, g1, a) >= vge(h, g2, a));
    }
}

TEST_CASE("composed pipeline stays inside its bounds") {
    Rng rng(34);
    for (int rep = 0; rep < 2000; ++rep) {
        const double h = rng.uniform();
        const double g = 1e-9 + rng.uniform() * (1.0 - 1e-9);
        const double a = rng.uniform();
        const double ga = 1e-3 + rng.uniform() * 2.0;
        const double mmax = 1.0 + rng.uniform();
        const double v = vge(h, g, a);
        const double r = risk_score(v, ga);
        const double m = boost_strength(r, mmax);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
        CHECK(m >= 1.0);
        CHECK(m <= mmax);
    }
}

TEST_CASE("scalar pipeline matches the brute-force oracle") {
    CheckResult r = check_oracle_arithmetic(2000, 77);
    INFO(r.detail);
    CHECK(r.passed);
}

TEST_CASE("assess_step record is self-consistent") {
    Rng rng(35);
    GroundingVector g;
    g.g.resize(16);
    for (double& v : g.g) v = 1e-6 + rng.uniform() * (1.0 - 1e-6);
    std::vector<double> z(16);
    for (double& v : z) v = rng.normal() * 2.0;
    ProbVector p = softmax(z);
    RiskReadout out = assess_step(z, p, g, 0.5, 0.5, 1.1);
    CHECK(out.vge == vge(out.h_bar, out.g, 0.5));
    CHECK(out.r == risk_score(out.vge, 0.5));
    CHECK(out.m == boost_strength(out.r, 1.1));
    CHECK(out.g == g.g[size_t(argmax(z))]);
}
