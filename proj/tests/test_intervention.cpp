#include "avb/checks.hpp"
#include "avb/intervention.hpp"
#include "avb/rng.hpp"

#include <stdexcept>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace avb;

namespace {

SegmentMap map_with_generated(int n_vis, int n_sys, int n_txt, int n_gen) {
    SegmentMap seg = SegmentMap::for_prompt(n_vis, n_sys, n_txt);
    for (int i = 0; i < n_gen; ++i) seg.push_generated();
    return seg;
}

std::vector<double> random_row(const SegmentMap& seg, Rng& rng) {
    std::vector<double> row(size_t(seg.size()));
    for (double& v : row) v = rng.normal();
    return row;
}

} // namespace

TEST_CASE("boost_visual scales exactly the visual entries") {
    SegmentMap seg = map_with_generated(2, 1, 2, 1);
    std::vector<double> row = {2.0, -0.5, 1.7, 0.3, 0.4, 0.9};
    boost_visual(row, seg, 1.5);
    CHECK(row[0] == 3.0);
    CHECK(row[1] == -0.75); // negative visual scores get more negative
    CHECK(row[2] == 1.7);
    CHECK(row[3] == 0.3);
    CHECK(row[4] == 0.4);
    CHECK(row[5] == 0.9);

    CHECK_THROWS_AS(boost_visual(row, seg, 0.99), std::invalid_argument);
}

TEST_CASE("boost_visual with m_t = 1 is the elementwise identity") {
    Rng rng(41);
    SegmentMap seg = map_with_generated(4, 1, 3, 5);
    std::vector<double> row = random_row(seg, rng);
    std::vector<double> copy = row;
    boost_visual(row, seg, 1.0);
    CHECK(row == copy);
}

TEST_CASE("suppress_text divides only the scoped entries") {
    SegmentMap seg = map_with_generated(1, 1, 2, 2); // V S T T G G
    std::vector<double> base = {1.0, 1.0, 1.0, -2.0, 1.0, 1.0};

    std::vector<double> row = base;
    suppress_text(row, seg, 2.0, SuppressionScope::TextInputOnly);
    CHECK(row == std::vector<double>{1.0, 1.0, 0.5, -1.0, 1.0, 1.0});

    row = base;
    suppress_text(row, seg, 2.0, SuppressionScope::SystemPromptOnly);
    CHECK(row == std::vector<double>{1.0, 0.5, 1.0, -2.0, 1.0, 1.0});

    row = base;
    suppress_text(row, seg, 2.0, SuppressionScope::TextOutputOnly);
    CHECK(row == std::vector<double>{1.0, 1.0, 1.0, -2.0, 0.5, 0.5});

    row = base;
    suppress_text(row, seg, 2.0, SuppressionScope::AllText);
    CHECK(row == std::vector<double>{1.0, 0.5, 0.5, -1.0, 0.5, 0.5});

    row = base;
    suppress_text(row, seg, 2.0, SuppressionScope::None);
    CHECK(row == base);

    row = base;
    suppress_text(row, seg, 1.0, SuppressionScope::AllText);
    CHECK(row == base);

    CHECK_THROWS_AS(suppress_text(row, seg, 0.5, SuppressionScope::AllText), std::invalid_argument);
}

TEST_CASE("boost and suppression touch disjoint index sets") {
    Rng rng(42);
    for (int rep = 0; rep < 200; ++rep) {
        SegmentMap seg = map_with_generated(1 + int(rng.below(6)), int(rng.below(3)),
                                            1 + int(rng.below(4)), int(rng.below(8)));
        const std::vector<double> base = random_row(seg, rng);
        for (SuppressionScope scope :
             {SuppressionScope::AllText, SuppressionScope::TextOutputOnly,
              SuppressionScope::SystemPromptOnly, SuppressionScope::TextInputOnly}) {
            std::vector<double> boosted = base;
            boost_visual(boosted, seg, 1.7);
            std::vector<double> suppressed = base;
            suppress_text(suppressed, seg, 1.7, scope);
            for (size_t i = 0; i < base.size(); ++i) {
                const bool b = boosted[i] != base[i];
                const bool s = suppressed[i] != base[i];
                CHECK_FALSE((b && s));
            }
        }
    }
}

TEST_CASE("apply honors the half-open layer range") {
    InterventionConfig cfg;
    cfg.layer_start = 2;
    cfg.layer_end = 5;
    cfg.m_vis_max = 2.0;
    cfg.m_txt_max = 2.0;
    cfg.scope = SuppressionScope::TextInputOnly;
    cfg.validate(8);

    SegmentMap seg = map_with_generated(1, 0, 1, 1);
    const std::vector<double> base = {1.0, 1.0, 1.0};

    auto run = [&](int layer) {
        ScoreRow row{base, layer};
        return apply(std::move(row), seg, cfg, 2.0).scores;
    };

    CHECK(run(1) == base);                                  // below the range
    CHECK(run(5) == base);                                  // layer_end excluded
    CHECK(run(2) == std::vector<double>{2.0, 0.5, 1.0});    // layer_start included
    CHECK(run(4) == std::vector<double>{2.0, 0.5, 1.0});
}

TEST_CASE("apply with unit factors is exactly the identity at every layer") {
    Rng rng(43);
    InterventionConfig cfg;
    cfg.m_vis_max = 1.0;
    cfg.m_txt_max = 1.0;
    cfg.layer_start = 0;
    cfg.layer_end = 16;
    SegmentMap seg = map_with_generated(3, 1, 2, 4);
    for (int layer = 0; layer < 16; ++layer) {
        std::vector<double> row = random_row(seg, rng);
        const std::vector<double> copy = row;
        apply(row, layer, seg, cfg, 1.0);
        CHECK(row == copy);
    }
}

TEST_CASE("apply commutes with label-preserving position permutations") {
    Rng rng(44);
    InterventionConfig cfg;
    cfg.m_vis_max = 1.9;
    cfg.m_txt_max = 1.4;
    cfg.layer_start = 0;
    cfg.layer_end = 1;
    for (int rep = 0; rep < 50; ++rep) {
        SegmentMap seg = map_with_generated(3, 2, 3, 4);
        std::vector<double> row = random_row(seg, rng);

        // permute within each label class
        std::vector<int> perm(size_t(seg.size()));
        std::iota(perm.begin(), perm.end(), 0);
        for (int c = 0; c < 4; ++c) {
            std::vector<int> members;
            for (int i = 0; i < seg.size(); ++i)
                if (int(seg[i]) == c) members.push_back(i);
            for (size_t i = 1; i < members.size(); ++i) {
                const size_t j = rng.below(i + 1);
                std::swap(perm[size_t(members[i])], perm[size_t(members[j])]);
            }
        }

        std::vector<double> permuted(row.size());
        for (size_t i = 0; i < row.size(); ++i) permuted[size_t(perm[i])] = row[i];

        std::vector<double> a = row;
        apply(a, 0, seg, cfg, 1.6);
        std::vector<double> b = permuted;
        apply(b, 0, seg, cfg, 1.6);
        for (size_t i = 0; i < row.size(); ++i) CHECK(a[i] == b[size_t(perm[i])]);
    }
}

TEST_CASE("post-softmax mass moves monotonically") {
    CheckResult r = check_mass_monotonicity(200, 99);
    INFO(r.detail);
    CHECK(r.passed);
}

TEST_CASE("intervention config validation") {
    InterventionConfig cfg;
    CHECK_NOTHROW(cfg.validate(16));

    InterventionConfig bad = cfg;
    bad.layer_start = 8;
    bad.layer_end = 8;
    CHECK_THROWS_AS(bad.validate(16), std::invalid_argument);
    bad.layer_end = 4;
    CHECK_THROWS_AS(bad.validate(16), std::invalid_argument);

    bad = cfg;
    bad.layer_end = 17;
    CHECK_THROWS_AS(bad.validate(16), std::invalid_argument);

    bad = cfg;
    bad.alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(16), std::invalid_argument);

    bad = cfg;
    bad.gamma = 0.0;
    CHECK_THROWS_AS(bad.validate(16), std::invalid_argument);

    bad = cfg;
    bad.m_vis_max = 0.5;
    CHECK_THROWS_AS(bad.validate(16), std::invalid_argument);

    bad = cfg;
    bad.m_txt_max = 0.0;
    CHECK_THROWS_AS(bad.validate(16), std::invalid_argument);
}
