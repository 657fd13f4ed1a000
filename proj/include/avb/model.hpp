#pragma once

#include "avb/rng.hpp"
#include "avb/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace avb {

// Reserved function-token ids. Must stay below ModelConfig::n_function_tokens.
enum ReservedToken : int {
    TOK_EOS      = 0,
    TOK_START    = 1, // fed as the first decode input after prefill
    TOK_IMG_PAD  = 2, // neutral embedding for unused visual slots
    TOK_SYS      = 3,
    TOK_DESCRIBE = 4,
    TOK_IMAGE    = 5,
};

struct ModelConfig {
    int vocab_size      = 64;
    int hidden_dim      = 32;
    int n_layers        = 16;
    int n_heads         = 4;
    int n_visual_tokens = 8;
    uint64_t seed       = 1;

    // Vocabulary layout: [0, n_function) reserved function tokens,
    // [n_function, n_function + n_concepts) concept words, the rest filler.
    // The first n_prior concept ids carry a fixed LM-head logit bonus of
    // prior_bias: a language prior that pulls generation toward those
    // concepts whether or not the image supports them.
    int n_function_tokens = 8;
    int n_concept_tokens  = 16;
    int n_prior_tokens    = 8;
    double prior_bias     = 2.0;

    // Scale of the seeded perturbation added to visual slot embeddings.
    double encode_noise = 0.02;

    int max_positions = 512;

    int head_dim() const { return hidden_dim / n_heads; }
    int mlp_dim() const { return 2 * hidden_dim; }

    int concept_begin() const { return n_function_tokens; }
    int concept_end() const { return n_function_tokens + n_concept_tokens; }
    bool is_function(int id) const { return id >= 0 && id < n_function_tokens; }
    bool is_concept(int id) const { return id >= concept_begin() && id < concept_end(); }
    bool is_prior(int id) const { return id >= concept_begin() && id < concept_begin() + n_prior_tokens; }

    void validate() const; // throws std::invalid_argument
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;     // hidden_dim x hidden_dim
    Matrix mlp_in, mlp_out;    // hidden_dim x mlp_dim, mlp_dim x hidden_dim
    std::vector<double> ln1_gamma, ln1_beta;
    std::vector<double> ln2_gamma, ln2_beta;
};

struct ModelWeights {
    ModelConfig config;
    Matrix embedding;      // vocab_size x hidden_dim, tied to the LM head
    Matrix pos_embedding;  // max_positions x hidden_dim
    std::vector<LayerWeights> layers;
    std::vector<double> ln_f_gamma, ln_f_beta;
    std::vector<double> prior_logit_bias; // length vocab_size, added by the LM head
};

// Set of vocabulary ids depicted by the image. Ids must be non-function and
// < vocab_size; encode_image sorts them into visual slots in ascending order.
struct SyntheticImage {
    std::vector<int> grounded_concepts;

    bool contains(int id) const;
};

enum class Segment : uint8_t { Visual = 0, SystemPrompt = 1, TextInput = 2, Generated = 3 };

// Per-position modality labels for the cached sequence. Layout is always
// [visual | system prompt | text input | generated...].
struct SegmentMap {
    std::vector<Segment> labels;
    int n_visual = 0, n_system = 0, n_text_input = 0;

    static SegmentMap for_prompt(int n_visual, int n_system, int n_text_input);

    int size() const { return int(labels.size()); }
    Segment operator[](int i) const { return labels[size_t(i)]; }
    int prompt_len() const { return n_visual + n_system + n_text_input; }
    void push_generated() { labels.push_back(Segment::Generated); }
    std::vector<int> indices_of(Segment s) const;
    bool valid() const;
};

struct KvCache {
    Matrix k, v; // rows = cached positions, cols = hidden_dim

    int len() const { return k.rows; }
};

struct DecodeState {
    std::vector<KvCache> cache; // one per layer
    SegmentMap segments;
    int length = 0;       // positions processed so far
    double r_prev = 0.0;  // risk carried into the next step, 0 before step 1
    Rng rng{0};
};

struct StepLogits {
    std::vector<double> z; // LM-head logits, length vocab_size
    ProbVector p;          // softmax(z)
};

// Hook applied to each pre-softmax attention score row during decoding,
// once per (layer, head). The row covers every cached position plus the
// current one; entries may be modified in place.
using ScoreModulator = std::function<void(std::span<double> scores, int layer, int head)>;

struct PrefillResult {
    DecodeState state;
    // LM-head logits at each visual position, computed in the prefill pass.
    std::vector<std::vector<double>> visual_logits;
};

// Deterministic constructed weights: tied embeddings, near-identity value
// and output projections, seeded perturbations. Attention mass routed to a
// visual slot raises the LM-head logit of that slot's concept.
ModelWeights build_model(const ModelConfig& config);

// N_i x hidden_dim visual slot embeddings: one slot per grounded concept
// (ascending id order), remaining slots hold the TOK_IMG_PAD embedding.
// Each slot gets seeded noise of scale config.encode_noise.
Matrix encode_image(const SyntheticImage& image, const ModelWeights& weights);

// Single batched pass over visual + system + input positions. Fills the KV
// cache and returns the LM-head logits of every visual position.
PrefillResult prefill(const ModelWeights& weights, const Matrix& visual_embeds,
                      std::span<const int> system_tokens, std::span<const int> input_tokens);

// One autoregressive step: feeds token_id at the next position, scores it
// against all cached keys plus itself, runs the modulator on every layer /
// head row in [0, n_layers), and returns LM-head logits (prior bias
// included). Throws std::runtime_error if the modulator leaves a non-finite
// score.
StepLogits decode_step(DecodeState& state, const ModelWeights& weights, int token_id,
                       const ScoreModulator& modulator);

// LM head: final layer norm + tied-embedding projection + prior bias.
std::vector<double> lm_head(const ModelWeights& weights, std::span<const double> hidden);

// Batched no-cache forward over the whole sequence; reference path for the
// incremental decoder. Returns LM-head logits at every position.
Matrix full_forward_logits(const ModelWeights& weights, const Matrix& visual_embeds,
                           std::span<const int> tokens_after_visual);

// Flat binary snapshot with a JSON header; layout documented in the README.
void save_weights(const ModelWeights& weights, const std::string& path);
ModelWeights load_weights(const std::string& path);

} // namespace avb
