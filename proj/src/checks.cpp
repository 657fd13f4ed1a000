#include "avb/checks.hpp"

#include "avb/intervention.hpp"
#include "avb/risk.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace avb {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

// Naive softmax used only by the oracles below.
std::vector<double> oracle_softmax(const std::vector<double>& z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - mx));
    for (double& v : p) v /= sum;
    return p;
}

SyntheticImage random_image(const ModelConfig& cfg, Rng& rng, int max_concepts) {
    const int k = 1 + int(rng.below(uint64_t(max_concepts)));
    SyntheticImage img;
    while (int(img.grounded_concepts.size()) < k) {
        const int id = cfg.concept_begin() + int(rng.below(uint64_t(cfg.n_concept_tokens)));
        if (!img.contains(id)) img.grounded_concepts.push_back(id);
    }
    return img;
}

} // namespace

CheckResult check_oracle_arithmetic(int draws, uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    std::string worst_op = "-";
    auto track = [&](const char* op, double err) {
        if (err > worst) {
            worst = err;
            worst_op = op;
        }
    };

    for (int i = 0; i < draws; ++i) {
        // vge
        {
            const double h = rng.uniform();
            const double g = 1.0 - rng.uniform() * (1.0 - 1e-12);
            const double a = rng.uniform();
            const double expect = a * h + (1.0 - a) * (1.0 - g);
            track("vge", std::fabs(vge(h, g, a) - expect));
        }
        // risk_score
        {
            const double v = rng.uniform();
            const double ga = 1e-3 + rng.uniform() * 2.0;
            const double ratio = v / ga;
            const double expect = ratio < 1.0 ? ratio : 1.0;
            track("risk_score", std::fabs(risk_score(v, ga) - expect));
        }
        // boost_strength
        {
            const double r = rng.uniform();
            const double m = 1.0 + rng.uniform();
            const double expect = 1.0 + (m - 1.0) * r;
            track("boost_strength", std::fabs(boost_strength(r, m) - expect));
        }
        // normalized_entropy
        {
            const int v = 2 + int(rng.below(63));
            std::vector<double> z(size_t(v), 0.0);
            for (double& e : z) e = rng.normal() * 2.0;
            ProbVector p = softmax(z);
            double h = 0.0;
            for (double pi : p.p)
                if (pi > 0.0) h += -pi * std::log(pi);
            double expect = h / std::log(double(v));
            if (expect < 0.0) expect = 0.0;
            if (expect > 1.0) expect = 1.0;
            track("normalized_entropy", std::fabs(normalized_entropy(p) - expect));
        }
    }

    // grounding_vector against a plain double loop, smaller draw count
    for (int i = 0; i < std::max(1, draws / 20); ++i) {
        const int v = 2 + int(rng.below(63));
        const int n_pos = 1 + int(rng.below(6));
        std::vector<std::vector<double>> logits;
        logits.resize(size_t(n_pos));
        for (auto& h : logits) {
            h.resize(size_t(v));
            for (double& e : h) e = rng.normal() * 3.0;
        }
        GroundingVector g = grounding_vector(logits);
        for (int t = 0; t < v; ++t) {
            double expect = 0.0;
            for (int pidx = 0; pidx < n_pos; ++pidx) {
                const std::vector<double> p = oracle_softmax(logits[size_t(pidx)]);
                expect = std::max(expect, p[size_t(t)]);
            }
            track("grounding_vector", std::fabs(g.g[size_t(t)] - expect));
        }
    }

    CheckResult r;
    r.name = "oracle-arithmetic";
    r.passed = worst <= 1e-12;
    r.detail = "max |impl - oracle| = " + fmt(worst) + " (" + worst_op + ")";
    return r;
}

CheckResult check_vanilla_equivalence(int triples, uint64_t seed) {
    Rng rng(seed);
    ModelConfig cfg; // desk defaults
    int mismatches = 0;
    for (int i = 0; i < triples; ++i) {
        cfg.seed = mix_seed(seed, uint64_t(i));
        ModelWeights w = build_model(cfg);

        GenerationRequest req;
        req.image = random_image(cfg, rng, 4);
        const int n_sys = int(rng.below(3));
        const int n_in = 1 + int(rng.below(4));
        for (int s = 0; s < n_sys; ++s)
            req.system_tokens.push_back(int(rng.below(uint64_t(cfg.vocab_size))));
        for (int s = 0; s < n_in; ++s)
            req.input_tokens.push_back(int(rng.below(uint64_t(cfg.vocab_size))));
        req.max_new_tokens = 16;
        req.intervention.layer_start = 0;
        req.intervention.layer_end = cfg.n_layers;
        req.intervention.m_vis_max = 1.0;
        req.intervention.m_txt_max = 1.0;

        req.mode = Mode::Vanilla;
        GenerationResult vanilla = generate(req, w);
        req.mode = Mode::AdaVBoost;
        GenerationResult adav = generate(req, w);
        if (vanilla.tokens != adav.tokens) ++mismatches;
    }
    CheckResult r;
    r.name = "vanilla-equivalence";
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + "/" + std::to_string(triples) + " triples diverged";
    return r;
}

bool validate_lag_invariant(const std::vector<TraceStep>& trace, double m_vis_max) {
    if (trace.empty()) return false;
    if (trace.front().m != 1.0) return false;
    for (size_t t = 1; t < trace.size(); ++t) {
        if (trace[t].m != boost_strength(trace[t - 1].r, m_vis_max)) return false;
    }
    return true;
}

CheckResult check_lag_invariant(int episodes, uint64_t seed) {
    Rng rng(seed);
    ModelConfig cfg;
    ModelWeights w = build_model(cfg);
    InterventionConfig icfg;
    icfg.m_vis_max = 1.3;
    icfg.m_txt_max = 1.5;
    icfg.layer_start = 0;
    icfg.layer_end = cfg.n_layers;

    int bad = 0;
    for (int i = 0; i < episodes; ++i) {
        GenerationRequest req;
        req.image = random_image(cfg, rng, 4);
        req.system_tokens = {TOK_SYS};
        req.input_tokens = {TOK_DESCRIBE, TOK_IMAGE};
        req.max_new_tokens = 24;
        req.mode = Mode::AdaVBoost;
        req.intervention = icfg;
        GenerationResult res = generate(req, w);
        if (!validate_lag_invariant(res.trace, icfg.m_vis_max)) ++bad;
    }
    CheckResult r;
    r.name = "lag-invariant";
    r.passed = bad == 0;
    r.detail = std::to_string(bad) + "/" + std::to_string(episodes) + " traces violated the one-step lag";
    return r;
}

CheckResult check_mass_monotonicity(int rows, uint64_t seed) {
    Rng rng(seed);
    int boost_violations = 0, suppress_violations = 0;

    for (int i = 0; i < rows; ++i) {
        const int n_vis = 4 + int(rng.below(7));
        const int n_sys = int(rng.below(3));
        const int n_txt = 1 + int(rng.below(4));
        const int n_gen = 1 + int(rng.below(40));
        SegmentMap seg = SegmentMap::for_prompt(n_vis, n_sys, n_txt);
        for (int gidx = 0; gidx < n_gen; ++gidx) seg.push_generated();
        const int n = seg.size();

        // visual boost: non-negative visual scores, anything elsewhere
        std::vector<double> base(size_t(n), 0.0);
        for (int j = 0; j < n; ++j)
            base[size_t(j)] = seg[j] == Segment::Visual ? rng.uniform() * 2.0 : rng.normal();
        double prev = -1.0;
        for (int step = 0; step <= 10; ++step) {
            const double m = 1.0 + 0.1 * step;
            std::vector<double> row = base;
            boost_visual(row, seg, m);
            softmax_inplace(row);
            double mass = 0.0;
            for (int j = 0; j < n; ++j)
                if (seg[j] == Segment::Visual) mass += row[size_t(j)];
            if (mass < prev) ++boost_violations;
            prev = mass;
        }

        // text suppression: non-negative text-input scores, mass must fall
        for (int j = 0; j < n; ++j)
            base[size_t(j)] = seg[j] == Segment::TextInput ? rng.uniform() * 2.0 : rng.normal();
        prev = 2.0;
        for (int step = 0; step <= 10; ++step) {
            const double m = 1.0 + 0.1 * step;
            std::vector<double> row = base;
            suppress_text(row, seg, m, SuppressionScope::TextInputOnly);
            softmax_inplace(row);
            double mass = 0.0;
            for (int j = 0; j < n; ++j)
                if (seg[j] == Segment::TextInput) mass += row[size_t(j)];
            if (mass > prev) ++suppress_violations;
            prev = mass;
        }
    }

    CheckResult r;
    r.name = "mass-monotonicity";
    r.passed = boost_violations == 0 && suppress_violations == 0;
    r.detail = std::to_string(boost_violations) + " boost / " + std::to_string(suppress_violations) +
               " suppression violations over " + std::to_string(rows) + " rows";
    return r;
}

CheckResult check_cache_consistency(int sequences, uint64_t seed) {
    Rng rng(seed);
    ModelConfig cfg;
    ModelWeights w = build_model(cfg);
    const int total_tokens = 32 - cfg.n_visual_tokens; // whole sequence is 32 positions
    const int n_sys = 4, n_in = 4;

    double worst = 0.0;
    for (int s = 0; s < sequences; ++s) {
        std::vector<int> toks(size_t(total_tokens), 0);
        for (int& t : toks) t = int(rng.below(uint64_t(cfg.vocab_size)));

        SyntheticImage img = random_image(cfg, rng, 4);
        Matrix visual = encode_image(img, w);
        Matrix full = full_forward_logits(w, visual, toks);

        std::span<const int> sys(toks.data(), size_t(n_sys));
        std::span<const int> input(toks.data() + n_sys, size_t(n_in));
        PrefillResult pf = prefill(w, visual, sys, input);
        const int prefill_len = pf.state.length;

        for (size_t k = size_t(n_sys + n_in); k < toks.size(); ++k) {
            StepLogits step = decode_step(pf.state, w, toks[k], nullptr);
            const int pos = prefill_len + int(k) - (n_sys + n_in);
            auto frow = full.row(pos);
            for (int v = 0; v < cfg.vocab_size; ++v)
                worst = std::max(worst, std::fabs(step.z[size_t(v)] - frow[v]));
        }
    }
    CheckResult r;
    r.name = "cache-consistency";
    r.passed = worst <= 1e-9;
    r.detail = "max |incremental - recompute| = " + fmt(worst);
    return r;
}

std::vector<CheckResult> run_all_checks() {
    return {check_oracle_arithmetic(), check_vanilla_equivalence(), check_lag_invariant(),
            check_mass_monotonicity(), check_cache_consistency()};
}

} // namespace avb
