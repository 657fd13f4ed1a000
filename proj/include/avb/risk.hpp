#pragma once

#include "avb/tensor.hpp"

#include <span>
#include <vector>

namespace avb {

// Per-vocabulary visual support: g[v] is the largest softmax mass token v
// receives across the LM-head distributions of the visual positions,
// computed once at prefill and immutable afterwards. Entries lie in (0, 1].
struct GroundingVector {
    std::vector<double> g;

    size_t size() const { return g.size(); }
    double operator[](size_t i) const { return g[i]; }
};

// Elementwise max of softmax(h_i) over the visual-position logit vectors.
GroundingVector grounding_vector(const std::vector<std::vector<double>>& visual_logits);

// Entropy of p in nats divided by log(V); 0 * log 0 := 0. Result clamped to
// [0, 1]. Requires V >= 2.
double normalized_entropy(const ProbVector& p);

// g[argmax z], lowest index winning ties.
double grounding_score(const GroundingVector& g, std::span<const double> z);

// alpha * h_bar + (1 - alpha) * (1 - g_t): high when the model is uncertain
// or the would-be token lacks visual support.
double vge(double h_bar, double g_t, double alpha);

// min(vge / gamma, 1).
double risk_score(double vge, double gamma);

// 1 + (m_vis_max - 1) * r: no boost at zero risk, full boost at risk 1.
double boost_strength(double r, double m_vis_max);

// All per-step risk quantities in one record. m here is the boost strength
// implied by this step's own r; the generation loop applies it one step
// later.
struct RiskReadout {
    double h_bar = 0.0;
    double g     = 0.0;
    double vge   = 0.0;
    double r     = 0.0;
    double m     = 1.0;
};

RiskReadout assess_step(std::span<const double> z, const ProbVector& p, const GroundingVector& g,
                        double alpha, double gamma, double m_vis_max);

} // namespace avb
