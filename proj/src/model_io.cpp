#include "avb/model.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace avb {

// Snapshot layout (little-endian):
//   bytes 0..7   magic "AVBW0001"
//   bytes 8..15  uint64 header length H
//   bytes 16..   H bytes of UTF-8 JSON: {"config": {...}, "tensors": [...]}
//   then raw float64 payload, tensors concatenated row-major in manifest order.

namespace {

constexpr char kMagic[8] = {'A', 'V', 'B', 'W', '0', '0', '0', '1'};

using nlohmann::json;

struct TensorRef {
    std::string name;
    const std::vector<double>* data;
    int rows, cols;
};

template <typename W>
std::vector<TensorRef> manifest(W& w) {
    std::vector<TensorRef> out;
    auto mat = [&](const std::string& name, const Matrix& m) {
        out.push_back({name, &m.data, m.rows, m.cols});
    };
    auto vec = [&](const std::string& name, const std::vector<double>& v) {
        out.push_back({name, &v, 1, int(v.size())});
    };
    mat("embedding", w.embedding);
    mat("pos_embedding", w.pos_embedding);
    for (size_t l = 0; l < w.layers.size(); ++l) {
        const std::string p = "layer." + std::to_string(l) + ".";
        const LayerWeights& lw = w.layers[l];
        vec(p + "ln1_gamma", lw.ln1_gamma);
        vec(p + "ln1_beta", lw.ln1_beta);
        mat(p + "wq", lw.wq);
        mat(p + "wk", lw.wk);
        mat(p + "wv", lw.wv);
        mat(p + "wo", lw.wo);
        vec(p + "ln2_gamma", lw.ln2_gamma);
        vec(p + "ln2_beta", lw.ln2_beta);
        mat(p + "mlp_in", lw.mlp_in);
        mat(p + "mlp_out", lw.mlp_out);
    }
    vec("ln_f_gamma", w.ln_f_gamma);
    vec("ln_f_beta", w.ln_f_beta);
    vec("prior_logit_bias", w.prior_logit_bias);
    return out;
}

json config_to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size},
                {"hidden_dim", c.hidden_dim},
                {"n_layers", c.n_layers},
                {"n_heads", c.n_heads},
                {"n_visual_tokens", c.n_visual_tokens},
                {"seed", c.seed},
                {"n_function_tokens", c.n_function_tokens},
                {"n_concept_tokens", c.n_concept_tokens},
                {"n_prior_tokens", c.n_prior_tokens},
                {"prior_bias", c.prior_bias},
                {"encode_noise", c.encode_noise},
                {"max_positions", c.max_positions}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_visual_tokens = j.at("n_visual_tokens").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.n_function_tokens = j.at("n_function_tokens").get<int>();
    c.n_concept_tokens = j.at("n_concept_tokens").get<int>();
    c.n_prior_tokens = j.at("n_prior_tokens").get<int>();
    c.prior_bias = j.at("prior_bias").get<double>();
    c.encode_noise = j.at("encode_noise").get<double>();
    c.max_positions = j.at("max_positions").get<int>();
    return c;
}

void require_little_endian() {
    if constexpr (std::endian::native != std::endian::little)
        throw std::runtime_error("weight snapshots require a little-endian host");
}

} // namespace

void save_weights(const ModelWeights& weights, const std::string& path) {
    require_little_endian();
    json header;
    header["config"] = config_to_json(weights.config);
    json tensors = json::array();
    auto refs = manifest(weights);
    for (const TensorRef& t : refs)
        tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_weights: cannot open " + path);
    f.write(kMagic, 8);
    const uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), std::streamsize(hs.size()));
    for (const TensorRef& t : refs)
        f.write(reinterpret_cast<const char*>(t.data->data()),
                std::streamsize(t.data->size() * sizeof(double)));
    if (!f) throw std::runtime_error("save_weights: write failed for " + path);
}

ModelWeights load_weights(const std::string& path) {
    require_little_endian();
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_weights: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_weights: bad magic in " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    if (!f || hlen == 0 || hlen > (1u << 20))
        throw std::runtime_error("load_weights: bad header length in " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), std::streamsize(hlen));
    if (!f) throw std::runtime_error("load_weights: truncated header in " + path);

    json header = json::parse(hs);
    ModelConfig cfg = config_from_json(header.at("config"));
    cfg.validate();

    ModelWeights w;
    w.config = cfg;
    const int d = cfg.hidden_dim;
    w.embedding = Matrix(cfg.vocab_size, d);
    w.pos_embedding = Matrix(cfg.max_positions, d);
    w.layers.resize(size_t(cfg.n_layers));
    for (LayerWeights& lw : w.layers) {
        lw.wq = Matrix(d, d);
        lw.wk = Matrix(d, d);
        lw.wv = Matrix(d, d);
        lw.wo = Matrix(d, d);
        lw.mlp_in = Matrix(d, cfg.mlp_dim());
        lw.mlp_out = Matrix(cfg.mlp_dim(), d);
        lw.ln1_gamma.resize(size_t(d));
        lw.ln1_beta.resize(size_t(d));
        lw.ln2_gamma.resize(size_t(d));
        lw.ln2_beta.resize(size_t(d));
    }
    w.ln_f_gamma.resize(size_t(d));
    w.ln_f_beta.resize(size_t(d));
    w.prior_logit_bias.resize(size_t(cfg.vocab_size));

    auto refs = manifest(w);
    const json& tensors = header.at("tensors");
    if (tensors.size() != refs.size())
        throw std::runtime_error("load_weights: tensor manifest mismatch in " + path);
    for (size_t i = 0; i < refs.size(); ++i) {
        const json& tj = tensors.at(i);
        if (tj.at("name").get<std::string>() != refs[i].name ||
            tj.at("rows").get<int>() != refs[i].rows || tj.at("cols").get<int>() != refs[i].cols)
            throw std::runtime_error("load_weights: tensor '" + refs[i].name + "' mismatch in " + path);
        auto* dst = const_cast<std::vector<double>*>(refs[i].data);
        f.read(reinterpret_cast<char*>(dst->data()), std::streamsize(dst->size() * sizeof(double)));
        if (!f) throw std::runtime_error("load_weights: truncated payload in " + path);
    }
    return w;
}

} // namespace avb
