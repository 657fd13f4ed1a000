#pragma once

#include "avb/generation.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace avb {

struct TestbedConfig {
    int episodes       = 200;
    int max_new_tokens = 32;
    int min_concepts   = 2; // grounded-set size bounds per image
    int max_concepts   = 4;
    uint64_t seed      = 42;

    void validate(const ModelConfig& model) const; // throws std::invalid_argument
};

struct EpisodePrompt {
    SyntheticImage image;
    std::vector<int> system_tokens;
    std::vector<int> input_tokens;
};

// Deterministic episode draw: grounded set sampled uniformly without
// replacement from the concept ids, fixed describe-style prompt template.
EpisodePrompt sample_episode(const ModelConfig& model, const TestbedConfig& cfg,
                             uint64_t episode_seed);

struct ModeSpec {
    Mode mode = Mode::Vanilla;
    double fixed_boost_factor = 1.2;

    std::string name() const { return mode_name(mode); }
};

struct Episode {
    EpisodePrompt prompt;
    std::vector<std::string> modes; // parallel to results
    std::vector<GenerationResult> results;

    const GenerationResult* result_for(const std::string& mode) const;
};

// Runs every mode on every episode. Episodes are independent and fan out
// across an OpenMP worker pool (workers <= 0 means library default);
// results land in episode order so reports are deterministic.
std::vector<Episode> run_episodes(const ModelWeights& weights, const TestbedConfig& cfg,
                                  const std::vector<ModeSpec>& modes,
                                  const InterventionConfig& intervention,
                                  const DecodingConfig& decoding, int workers = 0);

// Ground truth needs no judge: a generated token is hallucinated iff it is
// a concept id outside the episode's grounded set.
bool is_hallucinated_token(int token, const SyntheticImage& image, const ModelConfig& model);

struct ModeMetrics {
    std::string mode;
    long generated      = 0;
    long concept_tokens = 0;
    long hallucinated   = 0;
    double hallucination_rate = 0.0; // hallucinated / generated
    double grounded_rate      = 0.0; // grounded concept tokens / concept tokens
    double mean_per_token_ms  = 0.0; // decode time only
    double mean_prefill_ms    = 0.0;
    std::vector<double> per_episode_rate;
};

// Position-aligned comparison against the vanilla output: a hallucinated
// vanilla position counts as resolved if the boosted output is clean (or
// absent) there, as remaining otherwise; a hallucinated boosted position
// that was clean (or absent) under vanilla counts as newly introduced.
struct CrossMetrics {
    std::string mode;
    long resolved         = 0;
    long remaining        = 0;
    long newly_introduced = 0;
};

struct HallucinationReport {
    long episodes = 0;
    std::vector<ModeMetrics> per_mode;
    std::vector<CrossMetrics> vs_vanilla; // empty when vanilla was not run
};

HallucinationReport hallucination_metrics(const std::vector<Episode>& episodes,
                                          const ModelConfig& model);

// Flattened per-token signals of one mode across all episodes.
struct TokenSignals {
    std::vector<double> h_bar, g, vge;
    std::vector<uint8_t> hallucinated;

    size_t size() const { return h_bar.size(); }
};

TokenSignals collect_signals(const std::vector<Episode>& episodes, const std::string& mode,
                             const ModelConfig& model);

// Tokens are split into ten value-based quantile buckets of the signal
// (ties collapse into the lowest admissible bucket). Requires >= 100 tokens.
struct DecileCounts {
    std::array<long, 10> hallucinated{};
    std::array<long, 10> total{};
};

DecileCounts decile_hallucination_counts(const std::vector<double>& signal,
                                         const std::vector<uint8_t>& labels);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Mean grounding score of hallucinated vs normal tokens inside the
// bottom-half-by-entropy region. Undefined (nullopt) when either class is
// missing from the region.
struct VgGap {
    double mean_hallucinated = 0.0;
    double mean_normal       = 0.0;
    double difference        = 0.0; // normal - hallucinated
    double pooled_se         = 0.0;
    long n_hallucinated      = 0;
    long n_normal            = 0;
};

std::optional<VgGap> low_entropy_vg_gap(const TokenSignals& signals);

// Exact one-sided paired sign test for H1: a < b.
struct SignTest {
    int wins   = 0; // a_i < b_i
    int losses = 0; // a_i > b_i
    int ties   = 0;
    double p_one_sided = 1.0;
};

SignTest paired_sign_test(const std::vector<double>& a, const std::vector<double>& b);

} // namespace avb
