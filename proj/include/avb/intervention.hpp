#pragma once

#include "avb/model.hpp"

#include <span>
#include <vector>

namespace avb {

enum class SuppressionScope { AllText, TextOutputOnly, SystemPromptOnly, TextInputOnly, None };

struct InterventionConfig {
    double alpha     = 0.5; // weight of entropy vs (1 - grounding) in the risk signal
    double gamma     = 0.5; // risk scale; risk = min(vge / gamma, 1)
    double m_vis_max = 1.1; // boost factor ceiling for visual scores
    double m_txt_max = 1.7; // constant divisor for suppressed text scores
    int layer_start  = 0;   // half-open layer range [layer_start, layer_end)
    int layer_end    = 16;
    SuppressionScope scope = SuppressionScope::TextInputOnly;

    void validate(int n_layers) const; // throws std::invalid_argument
};

// One pre-softmax attention score row (a single layer/head at one step).
// Covers every key position the query can see, self included.
struct ScoreRow {
    std::vector<double> scores;
    int layer = 0;
};

// Multiplies the scores at visual positions by m_t; everything else is left
// untouched. m_t < 1 is rejected. Note the sign caveat: a negative visual
// score scaled by m_t > 1 becomes more negative and loses mass.
void boost_visual(std::span<double> scores, const SegmentMap& segments, double m_t);

// Divides the scores of the scope-selected positions by m_txt_max.
void suppress_text(std::span<double> scores, const SegmentMap& segments, double m_txt_max,
                   SuppressionScope scope);

// Layer-gated combination: inside [layer_start, layer_end) boost then
// suppress, outside leave the row alone.
void apply(std::span<double> scores, int layer, const SegmentMap& segments,
           const InterventionConfig& cfg, double m_t);

// Value-typed wrappers over the span primitives.
ScoreRow boost_visual(ScoreRow row, const SegmentMap& segments, double m_t);
ScoreRow suppress_text(ScoreRow row, const SegmentMap& segments, double m_txt_max,
                       SuppressionScope scope);
ScoreRow apply(ScoreRow row, const SegmentMap& segments, const InterventionConfig& cfg, double m_t);

bool in_scope(Segment label, SuppressionScope scope);

} // namespace avb
