#include "avb/checks.hpp"
#include "avb/generation.hpp"
#include "avb/testbed.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace avb;

namespace {

// Exit contract: 0 success, 1 runtime or suite failure, 2 config error.
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct RunConfig {
    ModelConfig model;
    InterventionConfig intervention;
    DecodingConfig decoding;
    TestbedConfig testbed;
    std::vector<std::string> modes = {"vanilla", "adavboost"};
    double fixed_boost_factor = 1.2;
    std::string out_dir = "out";
    int workers = 0;
    json sweep; // optional: {"alpha": [...], "gamma": [...], ...}
};

struct CliOverrides {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::string> modes_csv;
    std::optional<int> episodes;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
};

SuppressionScope scope_from_name(const std::string& s) {
    if (s == "all_text") return SuppressionScope::AllText;
    if (s == "text_output") return SuppressionScope::TextOutputOnly;
    if (s == "system_prompt") return SuppressionScope::SystemPromptOnly;
    if (s == "text_input") return SuppressionScope::TextInputOnly;
    if (s == "none") return SuppressionScope::None;
    throw std::invalid_argument("unknown suppression scope '" + s +
                                "' (expected all_text, text_output, system_prompt, text_input or none)");
}

template <typename T>
void read_if(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file '" + path + "'");
    json j = json::parse(f);

    RunConfig c;
    if (j.contains("model")) {
        const json& m = j.at("model");
        read_if(m, "vocab_size", c.model.vocab_size);
        read_if(m, "hidden_dim", c.model.hidden_dim);
        read_if(m, "n_layers", c.model.n_layers);
        read_if(m, "n_heads", c.model.n_heads);
        read_if(m, "n_visual_tokens", c.model.n_visual_tokens);
        read_if(m, "seed", c.model.seed);
        read_if(m, "n_function_tokens", c.model.n_function_tokens);
        read_if(m, "n_concept_tokens", c.model.n_concept_tokens);
        read_if(m, "n_prior_tokens", c.model.n_prior_tokens);
        read_if(m, "prior_bias", c.model.prior_bias);
        read_if(m, "encode_noise", c.model.encode_noise);
        read_if(m, "max_positions", c.model.max_positions);
    }
    if (j.contains("intervention")) {
        const json& iv = j.at("intervention");
        read_if(iv, "alpha", c.intervention.alpha);
        read_if(iv, "gamma", c.intervention.gamma);
        read_if(iv, "m_vis_max", c.intervention.m_vis_max);
        read_if(iv, "m_txt_max", c.intervention.m_txt_max);
        read_if(iv, "layer_start", c.intervention.layer_start);
        read_if(iv, "layer_end", c.intervention.layer_end);
        if (iv.contains("scope"))
            c.intervention.scope = scope_from_name(iv.at("scope").get<std::string>());
    }
    if (j.contains("decoding")) {
        const json& d = j.at("decoding");
        if (d.contains("kind")) {
            const std::string k = d.at("kind").get<std::string>();
            if (k == "greedy") c.decoding.kind = DecodingKind::Greedy;
            else if (k == "sample") c.decoding.kind = DecodingKind::Sample;
            else throw std::invalid_argument("unknown decoding kind '" + k + "'");
        }
        read_if(d, "temperature", c.decoding.temperature);
        read_if(d, "seed", c.decoding.seed);
    }
    if (j.contains("testbed")) {
        const json& t = j.at("testbed");
        read_if(t, "episodes", c.testbed.episodes);
        read_if(t, "max_new_tokens", c.testbed.max_new_tokens);
        read_if(t, "min_concepts", c.testbed.min_concepts);
        read_if(t, "max_concepts", c.testbed.max_concepts);
        read_if(t, "seed", c.testbed.seed);
    }
    read_if(j, "modes", c.modes);
    read_if(j, "fixed_boost_factor", c.fixed_boost_factor);
    read_if(j, "out_dir", c.out_dir);
    read_if(j, "workers", c.workers);
    if (j.contains("sweep")) c.sweep = j.at("sweep");
    return c;
}

void apply_overrides(RunConfig& c, const CliOverrides& o) {
    if (const char* env = std::getenv("ADAVBOOST_SEED")) {
        try {
            const uint64_t s = std::stoull(env);
            c.model.seed = s;
            c.testbed.seed = mix_seed(s, 1);
            c.decoding.seed = mix_seed(s, 2);
        } catch (const std::exception&) {
            throw std::invalid_argument("ADAVBOOST_SEED is not a valid integer");
        }
    }
    if (o.seed) { // flag wins over env
        c.model.seed = *o.seed;
        c.testbed.seed = mix_seed(*o.seed, 1);
        c.decoding.seed = mix_seed(*o.seed, 2);
    }
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (o.episodes) c.testbed.episodes = *o.episodes;
    if (o.workers) c.workers = *o.workers;
    if (o.modes_csv) {
        c.modes.clear();
        std::stringstream ss(*o.modes_csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) c.modes.push_back(item);
    }
}

std::vector<ModeSpec> mode_specs(const RunConfig& c) {
    if (c.modes.empty()) throw std::invalid_argument("no modes configured");
    std::vector<ModeSpec> specs;
    for (const std::string& name : c.modes) {
        ModeSpec ms;
        ms.mode = mode_from_name(name);
        ms.fixed_boost_factor = c.fixed_boost_factor;
        specs.push_back(ms);
    }
    return specs;
}

void validate_config(const RunConfig& c) {
    c.model.validate();
    c.intervention.validate(c.model.n_layers);
    c.testbed.validate(c.model);
    if (c.decoding.kind == DecodingKind::Sample && !(c.decoding.temperature > 0.0))
        throw std::invalid_argument("decoding temperature must be > 0");
    if (!(c.fixed_boost_factor >= 1.0))
        throw std::invalid_argument("fixed_boost_factor must be >= 1");
    if (c.workers < 0) throw std::invalid_argument("workers must be >= 0");
    mode_specs(c); // mode names
}

RunConfig load_config(const CliOverrides& o) {
    RunConfig c = parse_config(o.config_path);
    apply_overrides(c, o);
    validate_config(c);
    fs::create_directories(c.out_dir);
    return c;
}

void write_traces(const RunConfig& cfg, const std::vector<Episode>& episodes) {
    for (const std::string& mode : episodes.front().modes) {
        const fs::path path = fs::path(cfg.out_dir) / ("trace_" + mode + ".jsonl");
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        for (const Episode& ep : episodes) {
            const GenerationResult* r = ep.result_for(mode);
            int step = 0;
            for (const TraceStep& st : r->trace) {
                json rec = {{"step", ++step}, {"token", st.token}, {"h_bar", st.h_bar},
                            {"g", st.g},      {"vge", st.vge},     {"r", st.r},
                            {"m", st.m}};
                f << rec.dump() << "\n";
            }
        }
        std::cout << "wrote " << path.string() << "\n";
    }
}

json report_to_json(const RunConfig& cfg, const std::vector<Episode>& episodes,
                    const HallucinationReport& report) {
    json out;
    out["episodes"] = report.episodes;
    json modes = json::object();
    const ModeMetrics* vanilla = nullptr;
    for (const ModeMetrics& m : report.per_mode) {
        modes[m.mode] = {{"generated", m.generated},
                         {"concept_tokens", m.concept_tokens},
                         {"hallucinated", m.hallucinated},
                         {"hallucination_rate", m.hallucination_rate},
                         {"grounded_rate", m.grounded_rate},
                         {"mean_per_token_ms", m.mean_per_token_ms},
                         {"mean_prefill_ms", m.mean_prefill_ms}};
        if (m.mode == mode_name(Mode::Vanilla)) vanilla = &m;
    }
    out["modes"] = modes;

    json cross = json::object();
    for (const CrossMetrics& c : report.vs_vanilla) {
        json entry = {{"resolved", c.resolved},
                      {"remaining", c.remaining},
                      {"newly_introduced", c.newly_introduced}};
        if (vanilla) {
            for (const ModeMetrics& m : report.per_mode) {
                if (m.mode != c.mode) continue;
                SignTest st = paired_sign_test(m.per_episode_rate, vanilla->per_episode_rate);
                entry["sign_test"] = {{"wins", st.wins},
                                      {"losses", st.losses},
                                      {"ties", st.ties},
                                      {"p_one_sided", st.p_one_sided}};
            }
        }
        cross[c.mode] = entry;
    }
    out["vs_vanilla"] = cross;

    if (vanilla) {
        TokenSignals sig = collect_signals(episodes, vanilla->mode, cfg.model);
        json sj;
        sj["mode"] = vanilla->mode;
        sj["tokens"] = sig.size();
        if (sig.size() >= 100) {
            DecileCounts ent = decile_hallucination_counts(sig.h_bar, sig.hallucinated);
            DecileCounts vge = decile_hallucination_counts(sig.vge, sig.hallucinated);
            std::vector<double> decile(10), ent_counts(10), vge_counts(10);
            for (int i = 0; i < 10; ++i) {
                decile[size_t(i)] = i + 1;
                ent_counts[size_t(i)] = double(ent.hallucinated[size_t(i)]);
                vge_counts[size_t(i)] = double(vge.hallucinated[size_t(i)]);
            }
            sj["entropy_decile_counts"] = ent_counts;
            sj["vge_decile_counts"] = vge_counts;
            sj["entropy_decile_spearman"] = spearman(decile, ent_counts);
            sj["vge_decile_spearman"] = spearman(decile, vge_counts);
        }
        if (auto gap = low_entropy_vg_gap(sig)) {
            sj["low_entropy_vg_gap"] = {{"mean_hallucinated", gap->mean_hallucinated},
                                        {"mean_normal", gap->mean_normal},
                                        {"difference", gap->difference},
                                        {"pooled_se", gap->pooled_se},
                                        {"n_hallucinated", gap->n_hallucinated},
                                        {"n_normal", gap->n_normal}};
        } else {
            sj["low_entropy_vg_gap"] = nullptr;
        }
        out["signals"] = sj;
    }
    return out;
}

int cmd_run(const RunConfig& cfg) {
    ModelWeights weights = build_model(cfg.model);
    std::vector<Episode> episodes = run_episodes(weights, cfg.testbed, mode_specs(cfg),
                                                 cfg.intervention, cfg.decoding, cfg.workers);
    write_traces(cfg, episodes);
    return 0;
}

int cmd_compare(const RunConfig& cfg) {
    ModelWeights weights = build_model(cfg.model);
    std::vector<Episode> episodes = run_episodes(weights, cfg.testbed, mode_specs(cfg),
                                                 cfg.intervention, cfg.decoding, cfg.workers);
    HallucinationReport report = hallucination_metrics(episodes, cfg.model);

    const fs::path path = fs::path(cfg.out_dir) / "report.json";
    json j = report_to_json(cfg, episodes, report);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << "\n";

    std::cout << "episodes: " << report.episodes << "\n";
    for (const ModeMetrics& m : report.per_mode) {
        std::cout << m.mode << ": hallucination_rate=" << m.hallucination_rate
                  << " grounded_rate=" << m.grounded_rate
                  << " mean_per_token_ms=" << m.mean_per_token_ms << "\n";
    }
    for (const CrossMetrics& c : report.vs_vanilla) {
        std::cout << c.mode << " vs vanilla: resolved=" << c.resolved
                  << " remaining=" << c.remaining << " newly_introduced=" << c.newly_introduced
                  << "\n";
    }
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    struct Axis {
        std::string name;
        std::vector<double> values;
    };
    std::vector<Axis> axes;
    for (const char* name : {"alpha", "gamma", "m_vis_max", "m_txt_max"}) {
        if (cfg.sweep.contains(name)) {
            auto vals = cfg.sweep.at(name).get<std::vector<double>>();
            if (!vals.empty()) axes.push_back({name, vals});
        }
    }
    if (axes.empty())
        throw std::invalid_argument("sweep requires a non-empty grid over alpha, gamma, m_vis_max or m_txt_max");

    ModelWeights weights = build_model(cfg.model);
    const fs::path path = fs::path(cfg.out_dir) / "sweep.csv";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "alpha,gamma,m_vis_max,m_txt_max,hallucination_rate,mean_per_token_ms\n";

    std::vector<size_t> idx(axes.size(), 0);
    bool done = false;
    while (!done) {
        InterventionConfig iv = cfg.intervention;
        for (size_t a = 0; a < axes.size(); ++a) {
            const double v = axes[a].values[idx[a]];
            if (axes[a].name == "alpha") iv.alpha = v;
            else if (axes[a].name == "gamma") iv.gamma = v;
            else if (axes[a].name == "m_vis_max") iv.m_vis_max = v;
            else iv.m_txt_max = v;
        }
        iv.validate(cfg.model.n_layers);

        std::vector<ModeSpec> specs = {{Mode::AdaVBoost, cfg.fixed_boost_factor}};
        std::vector<Episode> episodes =
            run_episodes(weights, cfg.testbed, specs, iv, cfg.decoding, cfg.workers);
        HallucinationReport report = hallucination_metrics(episodes, cfg.model);
        const ModeMetrics& m = report.per_mode.front();
        f << iv.alpha << "," << iv.gamma << "," << iv.m_vis_max << "," << iv.m_txt_max << ","
          << m.hallucination_rate << "," << m.mean_per_token_ms << "\n";

        // advance the cartesian product
        size_t a = 0;
        while (a < axes.size()) {
            if (++idx[a] < axes[a].values.size()) break;
            idx[a] = 0;
            ++a;
        }
        done = a == axes.size();
    }
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_check() {
    int failures = 0;
    for (const CheckResult& r : run_all_checks()) {
        std::cout << (r.passed ? "PASS" : "FAIL") << " " << r.name << ": " << r.detail << "\n";
        if (!r.passed) ++failures;
    }
    if (failures) {
        std::cout << failures << " suite(s) failed\n";
        return kExitRuntime;
    }
    std::cout << "all suites passed\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adavboost: risk-adaptive visual attention intervention on a synthetic multimodal decoder"};
    app.require_subcommand(1);

    CliOverrides o;
    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", o.config_path, "JSON config file");
        if (need_config) opt->required();
        sub->add_option("--out", [&o](const std::vector<std::string>& v) { o.out_dir = v.front(); return true; },
                        "output directory (overrides config)");
        sub->add_option("--modes", [&o](const std::vector<std::string>& v) { o.modes_csv = v.front(); return true; },
                        "comma-separated mode list (vanilla, fixed_boost, adavboost)");
        sub->add_option("--episodes", [&o](const std::vector<std::string>& v) { o.episodes = std::stoi(v.front()); return true; },
                        "episode count (overrides config)");
        sub->add_option("--seed", [&o](const std::vector<std::string>& v) { o.seed = std::stoull(v.front()); return true; },
                        "master seed (overrides config and ADAVBOOST_SEED)");
        sub->add_option("--workers", [&o](const std::vector<std::string>& v) { o.workers = std::stoi(v.front()); return true; },
                        "episode worker pool size (0 = library default)");
    };

    CLI::App* run = app.add_subcommand("run", "run episodes and write per-mode JSONL traces");
    add_common(run, true);
    CLI::App* compare = app.add_subcommand("compare", "run >= 2 modes and write a hallucination/timing report");
    add_common(compare, true);
    CLI::App* sweep = app.add_subcommand("sweep", "grid sweep over intervention parameters, CSV output");
    add_common(sweep, true);
    app.add_subcommand("check", "run the built-in invariant suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    if (app.got_subcommand("check")) {
        try {
            return cmd_check();
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitRuntime;
        }
    }

    RunConfig cfg;
    try {
        cfg = load_config(o);
        if (app.got_subcommand(compare) && cfg.modes.size() < 2)
            throw std::invalid_argument("compare needs at least two modes");
        if (app.got_subcommand(sweep) && cfg.sweep.is_null())
            throw std::invalid_argument("sweep requires a 'sweep' section in the config");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (app.got_subcommand(run)) return cmd_run(cfg);
        if (app.got_subcommand(compare)) return cmd_compare(cfg);
        if (app.got_subcommand(sweep)) return cmd_sweep(cfg);
    } catch (const std::invalid_argument& e) {
        // validation that only surfaces mid-run (e.g. sweep grid values)
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
