#include "avb/risk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avb {

GroundingVector grounding_vector(const std::vector<std::vector<double>>& visual_logits) {
    if (visual_logits.empty())
        throw std::invalid_argument("grounding_vector: need at least one visual position");
    const size_t v = visual_logits.front().size();
    GroundingVector out;
    out.g.assign(v, 0.0);
    for (const std::vector<double>& h : visual_logits) {
        if (h.size() != v) throw std::invalid_argument("grounding_vector: ragged logit vectors");
        ProbVector p = softmax(h);
        for (size_t i = 0; i < v; ++i) out.g[i] = std::max(out.g[i], p.p[i]);
    }
    return out;
}

double normalized_entropy(const ProbVector& p) {
    const size_t v = p.size();
    if (v < 2) throw std::invalid_argument("normalized_entropy: vocabulary size must be >= 2");
    double h = 0.0;
    for (double pi : p.p)
        if (pi > 0.0) h -= pi * std::log(pi);
    return std::clamp(h / std::log(double(v)), 0.0, 1.0);
}

double grounding_score(const GroundingVector& g, std::span<const double> z) {
    if (g.size() != z.size()) throw std::invalid_argument("grounding_score: length mismatch");
    return g.g[size_t(argmax(z))];
}

double vge(double h_bar, double g_t, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("vge: alpha must lie in [0, 1]");
    if (!(h_bar >= 0.0 && h_bar <= 1.0)) throw std::invalid_argument("vge: h_bar must lie in [0, 1]");
    if (!(g_t > 0.0 && g_t <= 1.0)) throw std::invalid_argument("vge: g_t must lie in (0, 1]");
    return alpha * h_bar + (1.0 - alpha) * (1.0 - g_t);
}

double risk_score(double vge, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("risk_score: gamma must be > 0");
    return std::min(vge / gamma, 1.0);
}

double boost_strength(double r, double m_vis_max) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("boost_strength: r must lie in [0, 1]");
    if (!(m_vis_max >= 1.0)) throw std::invalid_argument("boost_strength: m_vis_max must be >= 1");
    return 1.0 + (m_vis_max - 1.0) * r;
}

RiskReadout assess_step(std::span<const double> z, const ProbVector& p, const GroundingVector& g,
                        double alpha, double gamma, double m_vis_max) {
    RiskReadout out;
    out.h_bar = normalized_entropy(p);
    out.g = grounding_score(g, z);
    out.vge = vge(out.h_bar, out.g, alpha);
    out.r = risk_score(out.vge, gamma);
    out.m = boost_strength(out.r, m_vis_max);
    return out;
}

} // namespace avb
