#include "avb/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace avb {

void TestbedConfig::validate(const ModelConfig& model) const {
    if (episodes < 1) throw std::invalid_argument("testbed: episodes must be >= 1");
    if (max_new_tokens < 1) throw std::invalid_argument("testbed: max_new_tokens must be >= 1");
    if (min_concepts < 1 || min_concepts > max_concepts)
        throw std::invalid_argument("testbed: need 1 <= min_concepts <= max_concepts");
    if (max_concepts > model.n_concept_tokens)
        throw std::invalid_argument("testbed: max_concepts exceeds the concept vocabulary");
    if (max_concepts > model.n_visual_tokens)
        throw std::invalid_argument("testbed: max_concepts exceeds the visual slots");
}

EpisodePrompt sample_episode(const ModelConfig& model, const TestbedConfig& cfg,
                             uint64_t episode_seed) {
    Rng rng(mix_seed(cfg.seed, episode_seed));
    const int span = cfg.max_concepts - cfg.min_concepts + 1;
    const int k = cfg.min_concepts + int(rng.below(uint64_t(span)));

    std::vector<int> pool(size_t(model.n_concept_tokens));
    std::iota(pool.begin(), pool.end(), model.concept_begin());
    // Fisher-Yates prefix draw
    for (int i = 0; i < k; ++i) {
        const int j = i + int(rng.below(uint64_t(pool.size() - size_t(i))));
        std::swap(pool[size_t(i)], pool[size_t(j)]);
    }
    pool.resize(size_t(k));

    EpisodePrompt out;
    out.image.grounded_concepts = std::move(pool);
    out.system_tokens = {TOK_SYS};
    out.input_tokens = {TOK_DESCRIBE, TOK_IMAGE};
    return out;
}

const GenerationResult* Episode::result_for(const std::string& mode) const {
    for (size_t i = 0; i < modes.size(); ++i)
        if (modes[i] == mode) return &results[i];
    return nullptr;
}

std::vector<Episode> run_episodes(const ModelWeights& weights, const TestbedConfig& cfg,
                                  const std::vector<ModeSpec>& modes,
                                  const InterventionConfig& intervention,
                                  const DecodingConfig& decoding, int workers) {
    cfg.validate(weights.config);
    if (modes.empty()) throw std::invalid_argument("run_episodes: no modes requested");

    std::vector<Episode> episodes(size_t(cfg.episodes));
    std::vector<std::string> errors;

#ifdef _OPENMP
    const int n_threads = workers > 0 ? workers : omp_get_max_threads();
#else
    (void)workers;
    const int n_threads = 1;
#endif

#pragma omp parallel for schedule(dynamic) num_threads(n_threads)
    for (int e = 0; e < cfg.episodes; ++e) {
        try {
            Episode ep;
            ep.prompt = sample_episode(weights.config, cfg, uint64_t(e));
            for (const ModeSpec& ms : modes) {
                GenerationRequest req;
                req.image = ep.prompt.image;
                req.system_tokens = ep.prompt.system_tokens;
                req.input_tokens = ep.prompt.input_tokens;
                req.max_new_tokens = cfg.max_new_tokens;
                req.mode = ms.mode;
                req.fixed_boost_factor = ms.fixed_boost_factor;
                req.intervention = intervention;
                req.decoding = decoding;
                req.decoding.seed = mix_seed(decoding.seed, uint64_t(e));
                ep.modes.push_back(ms.name());
                ep.results.push_back(generate(req, weights));
            }
            episodes[size_t(e)] = std::move(ep);
        } catch (const std::exception& ex) {
#pragma omp critical
            errors.emplace_back(ex.what());
        }
    }
    if (!errors.empty()) throw std::runtime_error("run_episodes: " + errors.front());
    return episodes;
}

bool is_hallucinated_token(int token, const SyntheticImage& image, const ModelConfig& model) {
    return model.is_concept(token) && !image.contains(token);
}

HallucinationReport hallucination_metrics(const std::vector<Episode>& episodes,
                                          const ModelConfig& model) {
    if (episodes.empty()) throw std::invalid_argument("hallucination_metrics: no episodes");
    const std::vector<std::string>& modes = episodes.front().modes;
    for (const Episode& ep : episodes) {
        if (ep.modes != modes)
            throw std::invalid_argument("hallucination_metrics: episodes ran different mode sets");
    }

    HallucinationReport report;
    report.episodes = long(episodes.size());

    for (const std::string& mode : modes) {
        ModeMetrics m;
        m.mode = mode;
        double decode_ms = 0.0, prefill_ms = 0.0;
        for (const Episode& ep : episodes) {
            const GenerationResult* r = ep.result_for(mode);
            long ep_halluc = 0;
            for (int tok : r->tokens) {
                ++m.generated;
                if (model.is_concept(tok)) {
                    ++m.concept_tokens;
                    if (!ep.prompt.image.contains(tok)) {
                        ++m.hallucinated;
                        ++ep_halluc;
                    }
                }
            }
            m.per_episode_rate.push_back(double(ep_halluc) /
                                         double(std::max<size_t>(1, r->tokens.size())));
            decode_ms += r->decode_ms();
            prefill_ms += r->prefill_ms;
        }
        m.hallucination_rate = double(m.hallucinated) / double(std::max<long>(1, m.generated));
        m.grounded_rate = double(m.concept_tokens - m.hallucinated) /
                          double(std::max<long>(1, m.concept_tokens));
        m.mean_per_token_ms = decode_ms / double(std::max<long>(1, m.generated));
        m.mean_prefill_ms = prefill_ms / double(episodes.size());
        report.per_mode.push_back(std::move(m));
    }

    const bool have_vanilla =
        std::find(modes.begin(), modes.end(), mode_name(Mode::Vanilla)) != modes.end();
    if (have_vanilla) {
        for (const std::string& mode : modes) {
            if (mode == mode_name(Mode::Vanilla)) continue;
            CrossMetrics c;
            c.mode = mode;
            for (const Episode& ep : episodes) {
                const GenerationResult* base = ep.result_for(mode_name(Mode::Vanilla));
                const GenerationResult* boosted = ep.result_for(mode);
                const size_t nb = base->tokens.size();
                const size_t nm = boosted->tokens.size();
                for (size_t i = 0; i < std::max(nb, nm); ++i) {
                    const bool base_h =
                        i < nb && is_hallucinated_token(base->tokens[i], ep.prompt.image, model);
                    const bool boost_h =
                        i < nm && is_hallucinated_token(boosted->tokens[i], ep.prompt.image, model);
                    if (base_h && boost_h) ++c.remaining;
                    else if (base_h && !boost_h) ++c.resolved;
                    else if (!base_h && boost_h) ++c.newly_introduced;
                }
            }
            report.vs_vanilla.push_back(c);
        }
    }
    return report;
}

TokenSignals collect_signals(const std::vector<Episode>& episodes, const std::string& mode,
                             const ModelConfig& model) {
    TokenSignals s;
    for (const Episode& ep : episodes) {
        const GenerationResult* r = ep.result_for(mode);
        if (!r) throw std::invalid_argument("collect_signals: mode '" + mode + "' was not run");
        for (const TraceStep& st : r->trace) {
            s.h_bar.push_back(st.h_bar);
            s.g.push_back(st.g);
            s.vge.push_back(st.vge);
            s.hallucinated.push_back(is_hallucinated_token(st.token, ep.prompt.image, model) ? 1 : 0);
        }
    }
    return s;
}

DecileCounts decile_hallucination_counts(const std::vector<double>& signal,
                                         const std::vector<uint8_t>& labels) {
    const size_t n = signal.size();
    if (n != labels.size()) throw std::invalid_argument("decile counts: length mismatch");
    if (n < 100) throw std::invalid_argument("decile counts: need at least 100 labeled tokens");

    std::vector<double> sorted = signal;
    std::sort(sorted.begin(), sorted.end());
    // Upper edge of bucket b is the value at the end of its rank range; a
    // value equal to several edges lands in the lowest admissible bucket.
    std::array<double, 10> edges{};
    for (int b = 0; b < 10; ++b) edges[size_t(b)] = sorted[(size_t(b) + 1) * n / 10 - 1];

    DecileCounts out;
    for (size_t i = 0; i < n; ++i) {
        int b = 0;
        while (b < 9 && signal[i] > edges[size_t(b)]) ++b;
        ++out.total[size_t(b)];
        if (labels[i]) ++out.hallucinated[size_t(b)];
    }
    return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = 0.5 * double(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double n = double(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::optional<VgGap> low_entropy_vg_gap(const TokenSignals& signals) {
    const size_t n = signals.size();
    if (n < 2) return std::nullopt;
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    // Region boundary at the median; ties broken toward the lower index.
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return signals.h_bar[a] < signals.h_bar[b]; });
    const size_t region = n / 2;

    double sum_h = 0.0, sum_n = 0.0, ss_h = 0.0, ss_n = 0.0;
    long nh = 0, nn = 0;
    for (size_t k = 0; k < region; ++k) {
        const size_t i = idx[k];
        const double g = signals.g[i];
        if (signals.hallucinated[i]) {
            ++nh;
            sum_h += g;
            ss_h += g * g;
        } else {
            ++nn;
            sum_n += g;
            ss_n += g * g;
        }
    }
    if (nh == 0 || nn == 0) return std::nullopt;

    VgGap gap;
    gap.n_hallucinated = nh;
    gap.n_normal = nn;
    gap.mean_hallucinated = sum_h / double(nh);
    gap.mean_normal = sum_n / double(nn);
    gap.difference = gap.mean_normal - gap.mean_hallucinated;
    const double var_h = std::max(0.0, ss_h / double(nh) - gap.mean_hallucinated * gap.mean_hallucinated);
    const double var_n = std::max(0.0, ss_n / double(nn) - gap.mean_normal * gap.mean_normal);
    gap.pooled_se = std::sqrt(var_h / double(nh) + var_n / double(nn));
    return gap;
}

SignTest paired_sign_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_sign_test: length mismatch");
    SignTest t;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) ++t.wins;
        else if (a[i] > b[i]) ++t.losses;
        else ++t.ties;
    }
    const int n = t.wins + t.losses;
    if (n == 0) {
        t.p_one_sided = 1.0;
        return t;
    }
    // P[Bin(n, 1/2) >= wins], exact via log binomial coefficients
    double p = 0.0;
    const double ln_half_n = -double(n) * std::log(2.0);
    for (int k = t.wins; k <= n; ++k) {
        const double ln_c =
            std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) - std::lgamma(double(n - k) + 1.0);
        p += std::exp(ln_c + ln_half_n);
    }
    t.p_one_sided = std::min(1.0, p);
    return t;
}

} // namespace avb
