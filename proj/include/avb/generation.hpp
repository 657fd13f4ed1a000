#pragma once

#include "avb/intervention.hpp"
#include "avb/model.hpp"
#include "avb/risk.hpp"

#include <string>
#include <vector>

namespace avb {

enum class Mode { Vanilla, FixedBoost, AdaVBoost };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name); // throws std::invalid_argument

enum class DecodingKind { Greedy, Sample };

struct DecodingConfig {
    DecodingKind kind  = DecodingKind::Greedy;
    double temperature = 1.0;
    uint64_t seed      = 0;
};

struct GenerationRequest {
    SyntheticImage image;
    std::vector<int> system_tokens;
    std::vector<int> input_tokens;
    int max_new_tokens = 32;
    Mode mode          = Mode::Vanilla;

    // FixedBoost: constant visual multiplier inside the configured layer
    // range, no text suppression, no risk feedback.
    double fixed_boost_factor = 1.2;

    // Used for boosting/suppression by AdaVBoost, for the layer range by
    // FixedBoost, and for the recorded (read-only) risk fields by every mode.
    InterventionConfig intervention;

    DecodingConfig decoding;
};

struct TraceStep {
    int token    = 0;
    double h_bar = 0.0;
    double g     = 0.0;
    double vge   = 0.0;
    double r     = 0.0;
    double m     = 1.0; // boost strength applied at this step (lags r by one)
};

struct GenerationResult {
    std::vector<int> tokens;
    std::vector<TraceStep> trace;
    double wall_ms    = 0.0;
    double prefill_ms = 0.0;

    double decode_ms() const { return wall_ms - prefill_ms; }
};

// Runs one full request: prefill, grounding vector, then max_new_tokens
// decode steps (early stop on EOS). Step t applies the boost implied by the
// risk of step t-1 (none at step 1); suppression is constant per step for
// AdaVBoost. The risk fields are computed and recorded for every mode but
// only AdaVBoost feeds them back.
GenerationResult generate(const GenerationRequest& request, const ModelWeights& weights);

// Greedy: argmax with lowest-index tie-break. Sample: draw from
// p^(1/temperature) renormalized, via inverse CDF on rng.uniform().
int select_token(const ProbVector& p, const DecodingConfig& decoding, Rng& rng);

} // namespace avb
