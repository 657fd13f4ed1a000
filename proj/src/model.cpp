#include "avb/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avb {

namespace {

constexpr double kLnEps = 1e-5;

// Constructed-weight scales. Embedding rows are unit-norm in expectation;
// value/output projections stay near identity so attention mass routed to a
// visual slot surfaces as LM-head logit mass on that slot's concept. The
// diagonal component of Q/K makes positions prefer keys aligned with their
// own hidden state, which keeps visual slots self-focused during prefill
// and lets concept-bearing queries find matching visual evidence during
// decoding.
constexpr double kEmbedScale    = 1.0;
constexpr double kPosScale      = 0.30;
constexpr double kQkNoiseScale  = 0.80;
constexpr double kQkDiag        = 1.20;
constexpr double kValueNoise    = 0.08;
constexpr double kOutProjGain   = 0.10;
constexpr double kMlpInScale    = 0.60;
constexpr double kMlpOutScale   = 0.10;

// The prompt-template tokens lean toward the prior concepts, so attention
// paid to the text input channels the language prior into the residual
// stream. This is what makes suppressing text-input scores meaningful.
constexpr double kPromptPriorPull = 0.9;

void fill_gaussian(Matrix& m, Rng& rng, double sd) {
    for (double& v : m.data) v = rng.normal() * sd;
}

void fill_gaussian_plus_diag(Matrix& m, Rng& rng, double sd, double diag) {
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) m(i, j) = rng.normal() * sd + (i == j ? diag : 0.0);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476)); }

void ln_affine(std::span<const double> x, std::span<const double> gamma,
               std::span<const double> beta, std::span<double> out) {
    layer_norm_into(x, kLnEps, out);
    for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] * gamma[i] + beta[i];
}

// out[j] = sum_k x[k] * w(k, j); same accumulation order as matmul rows.
void vec_mat(std::span<const double> x, const Matrix& w, std::span<double> out) {
    for (int j = 0; j < w.cols; ++j) {
        double acc = 0.0;
        for (int k = 0; k < w.rows; ++k) acc += x[k] * w(k, j);
        out[j] = acc;
    }
}

// Attention output for one query over key/value rows [0, n_keys). The score
// row per head runs through the modulator before softmax; the last index is
// the query's own position.
void attention_one(const ModelConfig& cfg, std::span<const double> q, const Matrix& keys,
                   const Matrix& values, int n_keys, const ScoreModulator& modulator, int layer,
                   std::span<double> ctx_out, std::vector<double>& scores_buf) {
    const int dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));
    scores_buf.resize(size_t(n_keys));
    std::fill(ctx_out.begin(), ctx_out.end(), 0.0);
    for (int h = 0; h < cfg.n_heads; ++h) {
        const int off = h * dh;
        for (int j = 0; j < n_keys; ++j) {
            const double* krow = keys.data.data() + size_t(j) * keys.cols + off;
            double acc = 0.0;
            for (int k = 0; k < dh; ++k) acc += q[size_t(off + k)] * krow[k];
            scores_buf[size_t(j)] = acc * inv_sqrt_dh;
        }
        if (modulator) {
            modulator(std::span<double>(scores_buf.data(), size_t(n_keys)), layer, h);
            for (int j = 0; j < n_keys; ++j) {
                if (!std::isfinite(scores_buf[size_t(j)]))
                    throw std::runtime_error("decode_step: intervention produced a non-finite attention score");
            }
        }
        softmax_inplace(std::span<double>(scores_buf.data(), size_t(n_keys)));
        for (int j = 0; j < n_keys; ++j) {
            const double a = scores_buf[size_t(j)];
            const double* vrow = values.data.data() + size_t(j) * values.cols + off;
            for (int k = 0; k < dh; ++k) ctx_out[size_t(off + k)] += a * vrow[k];
        }
    }
}

// Shared transformer stack over a batch of positions. When fill_cache is
// set, per-layer K/V matrices are copied into it. Returns the final hidden
// states (before the LM head).
Matrix backbone_forward(const ModelWeights& w, Matrix x, DecodeState* fill_cache) {
    const ModelConfig& cfg = w.config;
    const int n = x.rows;
    const int d = cfg.hidden_dim;
    Matrix h(n, d), ctx(n, d);
    std::vector<double> scores;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = w.layers[size_t(l)];
        for (int i = 0; i < n; ++i) ln_affine(x.row(i), lw.ln1_gamma, lw.ln1_beta, h.row(i));
        Matrix q = matmul(h, lw.wq);
        Matrix k = matmul(h, lw.wk);
        Matrix v = matmul(h, lw.wv);
        for (int i = 0; i < n; ++i)
            attention_one(cfg, q.row(i), k, v, i + 1, nullptr, l, ctx.row(i), scores);
        Matrix proj = matmul(ctx, lw.wo);
        for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += proj.data[i];
        for (int i = 0; i < n; ++i) ln_affine(x.row(i), lw.ln2_gamma, lw.ln2_beta, h.row(i));
        Matrix u = matmul(h, lw.mlp_in);
        for (double& e : u.data) e = gelu(e);
        Matrix mo = matmul(u, lw.mlp_out);
        for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += mo.data[i];
        if (fill_cache) {
            fill_cache->cache[size_t(l)].k = k;
            fill_cache->cache[size_t(l)].v = v;
        }
    }
    return x;
}

Matrix build_input_embeds(const ModelWeights& w, const Matrix& visual_embeds,
                          std::span<const int> tokens_after_visual) {
    const ModelConfig& cfg = w.config;
    if (visual_embeds.rows != cfg.n_visual_tokens || visual_embeds.cols != cfg.hidden_dim)
        throw std::invalid_argument("visual embeddings have the wrong shape");
    const int n = visual_embeds.rows + int(tokens_after_visual.size());
    if (n > cfg.max_positions) throw std::runtime_error("sequence exceeds max_positions");
    Matrix x(n, cfg.hidden_dim);
    for (int i = 0; i < visual_embeds.rows; ++i) {
        auto dst = x.row(i);
        auto src = visual_embeds.row(i);
        auto pos = w.pos_embedding.row(i);
        for (int j = 0; j < cfg.hidden_dim; ++j) dst[j] = src[j] + pos[j];
    }
    for (size_t t = 0; t < tokens_after_visual.size(); ++t) {
        const int id = tokens_after_visual[t];
        if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("token id out of range");
        const int p = visual_embeds.rows + int(t);
        auto dst = x.row(p);
        auto src = w.embedding.row(id);
        auto pos = w.pos_embedding.row(p);
        for (int j = 0; j < cfg.hidden_dim; ++j) dst[j] = src[j] + pos[j];
    }
    return x;
}

} // namespace

void ModelConfig::validate() const {
    if (vocab_size < 4) throw std::invalid_argument("model: vocab_size must be >= 4");
    if (hidden_dim < 1 || n_heads < 1 || hidden_dim % n_heads != 0)
        throw std::invalid_argument("model: hidden_dim must be a positive multiple of n_heads");
    if (n_layers < 1) throw std::invalid_argument("model: n_layers must be >= 1");
    if (n_visual_tokens < 1) throw std::invalid_argument("model: n_visual_tokens must be >= 1");
    if (n_function_tokens < 6)
        throw std::invalid_argument("model: n_function_tokens must cover the reserved ids (>= 6)");
    if (n_concept_tokens < 1) throw std::invalid_argument("model: n_concept_tokens must be >= 1");
    if (n_prior_tokens < 0 || n_prior_tokens > n_concept_tokens)
        throw std::invalid_argument("model: n_prior_tokens must lie in [0, n_concept_tokens]");
    if (n_function_tokens + n_concept_tokens > vocab_size)
        throw std::invalid_argument("model: function + concept tokens exceed vocab_size");
    if (prior_bias < 0.0 || !std::isfinite(prior_bias))
        throw std::invalid_argument("model: prior_bias must be finite and >= 0");
    if (encode_noise < 0.0 || !std::isfinite(encode_noise))
        throw std::invalid_argument("model: encode_noise must be finite and >= 0");
    if (max_positions < n_visual_tokens + 1)
        throw std::invalid_argument("model: max_positions too small");
}

bool SyntheticImage::contains(int id) const {
    return std::find(grounded_concepts.begin(), grounded_concepts.end(), id) !=
           grounded_concepts.end();
}

SegmentMap SegmentMap::for_prompt(int n_visual, int n_system, int n_text_input) {
    SegmentMap m;
    m.n_visual = n_visual;
    m.n_system = n_system;
    m.n_text_input = n_text_input;
    m.labels.reserve(size_t(n_visual + n_system + n_text_input));
    for (int i = 0; i < n_visual; ++i) m.labels.push_back(Segment::Visual);
    for (int i = 0; i < n_system; ++i) m.labels.push_back(Segment::SystemPrompt);
    for (int i = 0; i < n_text_input; ++i) m.labels.push_back(Segment::TextInput);
    return m;
}

std::vector<int> SegmentMap::indices_of(Segment s) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (labels[size_t(i)] == s) out.push_back(i);
    return out;
}

bool SegmentMap::valid() const {
    if (size() < n_visual + n_system + n_text_input) return false;
    int i = 0;
    for (int k = 0; k < n_visual; ++k, ++i)
        if (labels[size_t(i)] != Segment::Visual) return false;
    for (int k = 0; k < n_system; ++k, ++i)
        if (labels[size_t(i)] != Segment::SystemPrompt) return false;
    for (int k = 0; k < n_text_input; ++k, ++i)
        if (labels[size_t(i)] != Segment::TextInput) return false;
    for (; i < size(); ++i)
        if (labels[size_t(i)] != Segment::Generated) return false;
    return true;
}

ModelWeights build_model(const ModelConfig& config) {
    config.validate();
    const int d = config.hidden_dim;
    const double rsd = 1.0 / std::sqrt(double(d));
    ModelWeights w;
    w.config = config;
    Rng rng(config.seed);

    w.embedding = Matrix(config.vocab_size, d);
    fill_gaussian(w.embedding, rng, kEmbedScale * rsd);
    if (config.n_prior_tokens > 0) {
        std::vector<double> prior_mean(size_t(d), 0.0);
        for (int v = 0; v < config.vocab_size; ++v) {
            if (!config.is_prior(v)) continue;
            auto row = w.embedding.row(v);
            for (int j = 0; j < d; ++j) prior_mean[size_t(j)] += row[j];
        }
        for (double& e : prior_mean) e /= double(config.n_prior_tokens);
        for (int id : {int(TOK_DESCRIBE), int(TOK_IMAGE)}) {
            auto row = w.embedding.row(id);
            for (int j = 0; j < d; ++j) row[j] += kPromptPriorPull * prior_mean[size_t(j)];
        }
    }
    w.pos_embedding = Matrix(config.max_positions, d);
    fill_gaussian(w.pos_embedding, rng, kPosScale * rsd);

    w.layers.resize(size_t(config.n_layers));
    for (LayerWeights& lw : w.layers) {
        lw.ln1_gamma.assign(size_t(d), 1.0);
        lw.ln1_beta.assign(size_t(d), 0.0);
        lw.wq = Matrix(d, d);
        fill_gaussian_plus_diag(lw.wq, rng, kQkNoiseScale * rsd, kQkDiag);
        lw.wk = Matrix(d, d);
        fill_gaussian_plus_diag(lw.wk, rng, kQkNoiseScale * rsd, kQkDiag);
        lw.wv = Matrix(d, d);
        fill_gaussian_plus_diag(lw.wv, rng, kValueNoise * rsd, 1.0);
        lw.wo = Matrix(d, d);
        fill_gaussian_plus_diag(lw.wo, rng, kOutProjGain * kValueNoise * rsd, kOutProjGain);
        lw.ln2_gamma.assign(size_t(d), 1.0);
        lw.ln2_beta.assign(size_t(d), 0.0);
        lw.mlp_in = Matrix(d, config.mlp_dim());
        fill_gaussian(lw.mlp_in, rng, kMlpInScale * rsd);
        lw.mlp_out = Matrix(config.mlp_dim(), d);
        fill_gaussian(lw.mlp_out, rng, kMlpOutScale * rsd);
    }
    w.ln_f_gamma.assign(size_t(d), 1.0);
    w.ln_f_beta.assign(size_t(d), 0.0);

    w.prior_logit_bias.assign(size_t(config.vocab_size), 0.0);
    for (int v = 0; v < config.vocab_size; ++v)
        if (config.is_prior(v)) w.prior_logit_bias[size_t(v)] = config.prior_bias;
    return w;
}

Matrix encode_image(const SyntheticImage& image, const ModelWeights& weights) {
    const ModelConfig& cfg = weights.config;
    std::vector<int> ids = image.grounded_concepts;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.empty()) throw std::invalid_argument("encode_image: empty grounded set");
    for (int id : ids) {
        if (id < 0 || id >= cfg.vocab_size)
            throw std::invalid_argument("encode_image: concept id out of range");
        if (cfg.is_function(id))
            throw std::invalid_argument("encode_image: grounded set overlaps reserved function tokens");
    }
    if (int(ids.size()) > cfg.n_visual_tokens)
        throw std::invalid_argument("encode_image: more grounded concepts than visual slots");

    Matrix out(cfg.n_visual_tokens, cfg.hidden_dim);
    for (int slot = 0; slot < cfg.n_visual_tokens; ++slot) {
        const int id = slot < int(ids.size()) ? ids[size_t(slot)] : TOK_IMG_PAD;
        auto dst = out.row(slot);
        auto src = weights.embedding.row(id);
        Rng noise(mix_seed(mix_seed(cfg.seed, 0x5107u), mix_seed(uint64_t(slot), uint64_t(id))));
        for (int j = 0; j < cfg.hidden_dim; ++j)
            dst[j] = src[j] + cfg.encode_noise * noise.normal();
    }
    return out;
}

std::vector<double> lm_head(const ModelWeights& w, std::span<const double> hidden) {
    const ModelConfig& cfg = w.config;
    std::vector<double> hn(hidden.size());
    ln_affine(hidden, w.ln_f_gamma, w.ln_f_beta, hn);
    std::vector<double> z(size_t(cfg.vocab_size));
    for (int v = 0; v < cfg.vocab_size; ++v) {
        auto erow = w.embedding.row(v);
        double acc = 0.0;
        for (int j = 0; j < cfg.hidden_dim; ++j) acc += hn[size_t(j)] * erow[j];
        z[size_t(v)] = acc + w.prior_logit_bias[size_t(v)];
    }
    return z;
}

PrefillResult prefill(const ModelWeights& weights, const Matrix& visual_embeds,
                      std::span<const int> system_tokens, std::span<const int> input_tokens) {
    const ModelConfig& cfg = weights.config;
    std::vector<int> toks(system_tokens.begin(), system_tokens.end());
    toks.insert(toks.end(), input_tokens.begin(), input_tokens.end());

    PrefillResult out;
    out.state.cache.resize(size_t(cfg.n_layers));
    out.state.segments = SegmentMap::for_prompt(cfg.n_visual_tokens, int(system_tokens.size()),
                                                int(input_tokens.size()));

    Matrix x = build_input_embeds(weights, visual_embeds, toks);
    Matrix hidden = backbone_forward(weights, std::move(x), &out.state);
    out.state.length = hidden.rows;
    out.state.r_prev = 0.0;

    out.visual_logits.reserve(size_t(cfg.n_visual_tokens));
    for (int i = 0; i < cfg.n_visual_tokens; ++i)
        out.visual_logits.push_back(lm_head(weights, hidden.row(i)));
    return out;
}

StepLogits decode_step(DecodeState& state, const ModelWeights& weights, int token_id,
                       const ScoreModulator& modulator) {
    const ModelConfig& cfg = weights.config;
    if (token_id < 0 || token_id >= cfg.vocab_size)
        throw std::invalid_argument("decode_step: token id out of range");
    if (state.length == 0 || int(state.cache.size()) != cfg.n_layers)
        throw std::invalid_argument("decode_step: state not initialized by prefill");
    const int pos = state.length;
    if (pos >= cfg.max_positions) throw std::runtime_error("decode_step: sequence exceeds max_positions");

    const int d = cfg.hidden_dim;
    const size_t dz = size_t(d);
    std::vector<double> x(dz), h(dz), q(dz), k(dz), v(dz);
    std::vector<double> ctx(dz), proj(dz), u(size_t(cfg.mlp_dim())), mo(dz);
    std::vector<double> scores;

    {
        auto src = weights.embedding.row(token_id);
        auto posr = weights.pos_embedding.row(pos);
        for (int j = 0; j < d; ++j) x[size_t(j)] = src[j] + posr[j];
    }
    state.segments.push_generated();

    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = weights.layers[size_t(l)];
        KvCache& cache = state.cache[size_t(l)];
        ln_affine(x, lw.ln1_gamma, lw.ln1_beta, h);
        vec_mat(h, lw.wq, q);
        vec_mat(h, lw.wk, k);
        vec_mat(h, lw.wv, v);
        cache.k.push_row(k);
        cache.v.push_row(v);
        attention_one(cfg, q, cache.k, cache.v, cache.len(), modulator, l, ctx, scores);
        vec_mat(ctx, lw.wo, proj);
        for (int j = 0; j < d; ++j) x[size_t(j)] += proj[size_t(j)];
        ln_affine(x, lw.ln2_gamma, lw.ln2_beta, h);
        vec_mat(h, lw.mlp_in, u);
        for (double& e : u) e = gelu(e);
        vec_mat(u, lw.mlp_out, mo);
        for (int j = 0; j < d; ++j) x[size_t(j)] += mo[size_t(j)];
    }
    state.length = pos + 1;

    StepLogits out;
    out.z = lm_head(weights, x);
    out.p = softmax(out.z);
    return out;
}

Matrix full_forward_logits(const ModelWeights& weights, const Matrix& visual_embeds,
                           std::span<const int> tokens_after_visual) {
    Matrix x = build_input_embeds(weights, visual_embeds, tokens_after_visual);
    Matrix hidden = backbone_forward(weights, std::move(x), nullptr);
    Matrix logits(hidden.rows, weights.config.vocab_size);
    for (int i = 0; i < hidden.rows; ++i) {
        std::vector<double> z = lm_head(weights, hidden.row(i));
        std::copy(z.begin(), z.end(), logits.row(i).begin());
    }
    return logits;
}

} // namespace avb
