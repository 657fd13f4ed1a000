#include "avb/intervention.hpp"

#include <cmath>
#include <stdexcept>

namespace avb {

void InterventionConfig::validate(int n_layers) const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("intervention: alpha must lie in [0, 1]");
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument("intervention: gamma must be > 0");
    if (!(m_vis_max >= 1.0) || !std::isfinite(m_vis_max))
        throw std::invalid_argument("intervention: m_vis_max must be >= 1");
    if (!(m_txt_max >= 1.0) || !std::isfinite(m_txt_max))
        throw std::invalid_argument("intervention: m_txt_max must be >= 1");
    if (layer_start < 0 || layer_start >= layer_end || layer_end > n_layers)
        throw std::invalid_argument("intervention: layer range must satisfy 0 <= layer_start < layer_end <= n_layers");
}

bool in_scope(Segment label, SuppressionScope scope) {
    switch (scope) {
        case SuppressionScope::AllText: return label != Segment::Visual;
        case SuppressionScope::TextOutputOnly: return label == Segment::Generated;
        case SuppressionScope::SystemPromptOnly: return label == Segment::SystemPrompt;
        case SuppressionScope::TextInputOnly: return label == Segment::TextInput;
        case SuppressionScope::None: return false;
    }
    return false;
}

void boost_visual(std::span<double> scores, const SegmentMap& segments, double m_t) {
    if (!(m_t >= 1.0)) throw std::invalid_argument("boost_visual: m_t must be >= 1");
    const int n = int(std::min(scores.size(), size_t(segments.size())));
    for (int i = 0; i < n; ++i)
        if (segments[i] == Segment::Visual) scores[size_t(i)] *= m_t;
}

void suppress_text(std::span<double> scores, const SegmentMap& segments, double m_txt_max,
                   SuppressionScope scope) {
    if (!(m_txt_max >= 1.0)) throw std::invalid_argument("suppress_text: m_txt_max must be >= 1");
    if (scope == SuppressionScope::None) return;
    const int n = int(std::min(scores.size(), size_t(segments.size())));
    for (int i = 0; i < n; ++i)
        if (in_scope(segments[i], scope)) scores[size_t(i)] /= m_txt_max;
}

void apply(std::span<double> scores, int layer, const SegmentMap& segments,
           const InterventionConfig& cfg, double m_t) {
    if (layer < cfg.layer_start || layer >= cfg.layer_end) return;
    boost_visual(scores, segments, m_t);
    suppress_text(scores, segments, cfg.m_txt_max, cfg.scope);
}

ScoreRow boost_visual(ScoreRow row, const SegmentMap& segments, double m_t) {
    boost_visual(std::span<double>(row.scores), segments, m_t);
    return row;
}

ScoreRow suppress_text(ScoreRow row, const SegmentMap& segments, double m_txt_max,
                       SuppressionScope scope) {
    suppress_text(std::span<double>(row.scores), segments, m_txt_max, scope);
    return row;
}

ScoreRow apply(ScoreRow row, const SegmentMap& segments, const InterventionConfig& cfg, double m_t) {
    apply(std::span<double>(row.scores), row.layer, segments, cfg, m_t);
    return row;
}

} // namespace avb
