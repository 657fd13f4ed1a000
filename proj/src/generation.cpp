#include "avb/generation.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace avb {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

} // namespace

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Vanilla: return "vanilla";
        case Mode::FixedBoost: return "fixed_boost";
        case Mode::AdaVBoost: return "adavboost";
    }
    return "?";
}

Mode mode_from_name(const std::string& name) {
    if (name == "vanilla") return Mode::Vanilla;
    if (name == "fixed_boost") return Mode::FixedBoost;
    if (name == "adavboost") return Mode::AdaVBoost;
    throw std::invalid_argument("unknown mode '" + name + "' (expected vanilla, fixed_boost or adavboost)");
}

int select_token(const ProbVector& p, const DecodingConfig& decoding, Rng& rng) {
    if (p.size() == 0) throw std::invalid_argument("select_token: empty distribution");
    if (decoding.kind == DecodingKind::Greedy) return argmax(p.p);
    if (!(decoding.temperature > 0.0))
        throw std::invalid_argument("select_token: temperature must be > 0");
    const double inv_t = 1.0 / decoding.temperature;
    std::vector<double> q(p.size());
    double total = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        q[i] = p.p[i] > 0.0 ? std::pow(p.p[i], inv_t) : 0.0;
        total += q[i];
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int last_positive = 0;
    for (size_t i = 0; i < q.size(); ++i) {
        if (q[i] > 0.0) last_positive = int(i);
        acc += q[i];
        if (u < acc) return int(i);
    }
    return last_positive;
}

GenerationResult generate(const GenerationRequest& request, const ModelWeights& weights) {
    const ModelConfig& cfg = weights.config;
    if (request.max_new_tokens < 1)
        throw std::invalid_argument("generate: max_new_tokens must be >= 1");
    if (request.mode == Mode::FixedBoost && !(request.fixed_boost_factor >= 1.0))
        throw std::invalid_argument("generate: fixed_boost_factor must be >= 1");
    const InterventionConfig& icfg = request.intervention;
    if (request.mode != Mode::Vanilla) icfg.validate(cfg.n_layers);

    const auto t0 = Clock::now();
    GenerationResult out;

    Matrix visual = encode_image(request.image, weights);
    PrefillResult pf = prefill(weights, visual, request.system_tokens, request.input_tokens);
    DecodeState& state = pf.state;
    state.rng = Rng(mix_seed(request.decoding.seed, 0xDECD));
    out.prefill_ms = ms_since(t0);

    // Static for the whole request: built once from the prefill pass.
    const GroundingVector grounding = grounding_vector(pf.visual_logits);

    double m_step = 1.0; // captured by the modulators, updated per step
    ScoreModulator modulator;
    switch (request.mode) {
        case Mode::Vanilla:
            break;
        case Mode::FixedBoost:
            modulator = [&](std::span<double> scores, int layer, int) {
                if (layer < icfg.layer_start || layer >= icfg.layer_end) return;
                boost_visual(scores, state.segments, m_step);
            };
            break;
        case Mode::AdaVBoost:
            modulator = [&](std::span<double> scores, int layer, int) {
                apply(scores, layer, state.segments, icfg, m_step);
            };
            break;
    }

    int token = TOK_START;
    double r_prev = 0.0; // risk starts at zero, so step 1 never boosts
    for (int t = 1; t <= request.max_new_tokens; ++t) {
        switch (request.mode) {
            case Mode::Vanilla: m_step = 1.0; break;
            case Mode::FixedBoost: m_step = request.fixed_boost_factor; break;
            case Mode::AdaVBoost: m_step = boost_strength(r_prev, icfg.m_vis_max); break;
        }
        StepLogits step = decode_step(state, weights, token, modulator);
        const int y = select_token(step.p, request.decoding, state.rng);
        const RiskReadout risk =
            assess_step(step.z, step.p, grounding, icfg.alpha, icfg.gamma, icfg.m_vis_max);
        out.trace.push_back({y, risk.h_bar, risk.g, risk.vge, risk.r, m_step});
        out.tokens.push_back(y);
        r_prev = risk.r;
        state.r_prev = risk.r;
        token = y;
        if (y == TOK_EOS) break;
    }

    out.wall_ms = ms_since(t0);
    return out;
}

} // namespace avb
