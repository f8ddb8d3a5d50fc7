#include "heartinv/network.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "heartinv/csv.hpp"

namespace heartinv {

using nlohmann::json;

NetworkConfig NetworkConfig::with_depth(int total_layers, int n_blocks, int width) {
    NetworkConfig c;
    c.width = width;
    c.n_blocks = n_blocks;
    c.n_plain_layers = total_layers - 2 * n_blocks;
    c.validate();
    return c;
}

void NetworkConfig::validate() const {
    if (width < 1) throw Error("network width must be >= 1");
    if (n_blocks < 0) throw Error("block count must be >= 0");
    if (n_plain_layers < 2) throw Error("need at least the lift and head plain layers");
}

Normalization Normalization::from_mesh(const TriMesh& mesh, double t_end) {
    Normalization n;
    n.lo = mesh.bbox_min();
    n.hi = mesh.bbox_max();
    n.t_end = t_end > 0.0 ? t_end : 1.0;
    return n;
}

Eigen::Vector4d Normalization::scales() const {
    Eigen::Vector4d s;
    for (int k = 0; k < 3; ++k) {
        const double span = hi[k] - lo[k];
        s[k] = span > 0.0 ? 2.0 / span : 1.0;
    }
    s[3] = 1.0 / t_end;
    return s;
}

Eigen::Vector4d Normalization::apply(const Eigen::Vector3d& pos, double t) const {
    const Eigen::Vector4d s = scales();
    Eigen::Vector4d out;
    for (int k = 0; k < 3; ++k) out[k] = (pos[k] - lo[k]) * s[k] - 1.0;
    out[3] = t * s[3];
    return out;
}

std::vector<Stage> NetworkParams::stages() const {
    const int hidden_plain = config.n_plain_layers - 2;
    const int separators = std::min(hidden_plain, std::max(config.n_blocks - 1, 0));
    int extra = hidden_plain - separators;
    int remaining_separators = separators;

    std::vector<Stage> out;
    int layer = 1;
    for (int b = 0; b < config.n_blocks; ++b) {
        out.push_back({StageKind::Block, layer, b});
        layer += 2;
        if (b + 1 < config.n_blocks && remaining_separators > 0) {
            out.push_back({StageKind::Plain, layer, -1});
            ++layer;
            --remaining_separators;
        }
    }
    for (; extra > 0; --extra) {
        out.push_back({StageKind::Plain, layer, -1});
        ++layer;
    }
    return out;
}

double NetworkParams::gate(int block) const { return 1.0 / (1.0 + std::exp(-gate_logits.at(static_cast<std::size_t>(block)))); }

std::size_t parameter_count(const NetworkConfig& c) {
    const auto w = static_cast<std::size_t>(c.width);
    const auto hidden = static_cast<std::size_t>(c.n_plain_layers - 2 + 2 * c.n_blocks);
    return (4 * w + w) + hidden * (w * w + w) + (2 * w + 2) + static_cast<std::size_t>(c.n_blocks);
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = gate_logits.size();
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

std::vector<double> NetworkParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
        flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    flat.insert(flat.end(), gate_logits.begin(), gate_logits.end());
    return flat;
}

void NetworkParams::unflatten(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw Error("flat parameter vector has the wrong length");
    std::size_t pos = 0;
    for (auto& l : layers) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weight.size(), l.weight.data());
        pos += static_cast<std::size_t>(l.weight.size());
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.data());
        pos += static_cast<std::size_t>(l.bias.size());
    }
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos), flat.end(), gate_logits.begin());
}

NetworkParams init_network(const NetworkConfig& config, const Normalization& norm) {
    config.validate();
    NetworkParams p;
    p.config = config;
    p.norm = norm;

    std::mt19937_64 rng(config.seed);
    auto make_layer = [&](int in, int out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        DenseLayer l;
        l.weight.resize(out, in);
        // Row-major fill order keeps the draw sequence independent of storage.
        for (int r = 0; r < out; ++r) {
            for (int c = 0; c < in; ++c) l.weight(r, c) = dist(rng);
        }
        l.bias = Eigen::VectorXd::Zero(out);
        return l;
    };

    const int w = config.width;
    p.layers.push_back(make_layer(4, w));
    const int hidden = config.n_plain_layers - 2 + 2 * config.n_blocks;
    for (int i = 0; i < hidden; ++i) p.layers.push_back(make_layer(w, w));
    p.layers.push_back(make_layer(w, 2));
    p.gate_logits.assign(static_cast<std::size_t>(config.n_blocks), config.gate_logit_init);
    return p;
}

std::vector<ad::Var> ParamVars::all() const {
    std::vector<ad::Var> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.push_back(weights[i]);
        out.push_back(biases[i]);
    }
    out.insert(out.end(), gate_logits.begin(), gate_logits.end());
    return out;
}

ParamVars bind_params(ad::Tape& tape, const NetworkParams& params, bool trainable) {
    ParamVars v;
    auto make = [&](Eigen::MatrixXd m) { return trainable ? tape.leaf(std::move(m)) : tape.constant(std::move(m)); };
    for (const auto& l : params.layers) {
        v.weights.push_back(make(l.weight));
        v.biases.push_back(make(Eigen::MatrixXd(l.bias)));
    }
    for (double g : params.gate_logits) v.gate_logits.push_back(make(Eigen::MatrixXd::Constant(1, 1, g)));
    return v;
}

ad::Var network_forward(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars, ad::Var inputs) {
    if (inputs.rows() != 4) throw ad::ShapeError("network input must have 4 rows (x, y, z, t)");
    using namespace ad;
    auto dense = [&](int layer, Var x) { return ad::tanh(affine(vars.weights[layer], x, vars.biases[layer])); };

    Var x = dense(0, inputs);
    for (const auto& st : params.stages()) {
        if (st.kind == StageKind::Plain) {
            x = dense(st.layer, x);
            continue;
        }
        const Var h1 = dense(st.layer, x);
        const Var h2 = dense(st.layer + 1, h1);
        const Var alpha = vars.gate_override ? tape.constant(*vars.gate_override) : sigmoid(vars.gate_logits[st.gate]);
        const Var keep = shift(neg(alpha), 1.0);
        x = add(scalar_mul(keep, h2), scalar_mul(alpha, x));
    }
    const int head = static_cast<int>(params.layers.size()) - 1;
    return affine(vars.weights[head], x, vars.biases[head]);
}

Eigen::MatrixXd network_predict(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
    auto dense = [&](int layer, const Eigen::MatrixXd& x) {
        Eigen::MatrixXd z = params.layers[layer].weight * x;
        z.colwise() += params.layers[layer].bias;
        return ad::tanh_values(z);
    };
    Eigen::MatrixXd x = dense(0, inputs);
    for (const auto& st : params.stages()) {
        if (st.kind == StageKind::Plain) {
            x = dense(st.layer, x);
            continue;
        }
        const Eigen::MatrixXd h2 = dense(st.layer + 1, dense(st.layer, x));
        const double alpha = params.gate(st.gate);
        x = (1.0 - alpha) * h2 + alpha * x;
    }
    const auto& head = params.layers.back();
    Eigen::MatrixXd out = head.weight * x;
    out.colwise() += head.bias;
    return out;
}

std::vector<double> flatten_gradients(const ad::Gradients& grads, const ParamVars& vars) {
    std::vector<double> flat;
    for (const auto& v : vars.all()) {
        const Eigen::MatrixXd g = grads[v];
        flat.insert(flat.end(), g.data(), g.data() + g.size());
    }
    return flat;
}

// ---------------------------------------------------------------------------

std::string checkpoint_json(const NetworkParams& params) {
    json j;
    j["format"] = "heartinv-network";
    j["version"] = 1;
    j["config"] = {{"width", params.config.width},
                   {"n_blocks", params.config.n_blocks},
                   {"n_plain_layers", params.config.n_plain_layers},
                   {"seed", params.config.seed},
                   {"gate_logit_init", params.config.gate_logit_init}};
    j["normalization"] = {{"lo", {params.norm.lo[0], params.norm.lo[1], params.norm.lo[2]}},
                          {"hi", {params.norm.hi[0], params.norm.hi[1], params.norm.hi[2]}},
                          {"t_end", params.norm.t_end}};
    json layers = json::array();
    for (const auto& l : params.layers) {
        std::vector<double> w;
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
        }
        layers.push_back({{"rows", l.weight.rows()},
                          {"cols", l.weight.cols()},
                          {"weight", w},
                          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    j["layers"] = layers;
    j["gate_logits"] = params.gate_logits;
    return j.dump(1);
}

NetworkParams parse_checkpoint(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format") != "heartinv-network") throw Error("not a network checkpoint");
        if (j.at("version").get<int>() != 1) throw Error("unsupported checkpoint version");
        NetworkParams p;
        const auto& c = j.at("config");
        p.config.width = c.at("width").get<int>();
        p.config.n_blocks = c.at("n_blocks").get<int>();
        p.config.n_plain_layers = c.at("n_plain_layers").get<int>();
        p.config.seed = c.at("seed").get<std::uint64_t>();
        p.config.gate_logit_init = c.at("gate_logit_init").get<double>();
        p.config.validate();
        const auto& n = j.at("normalization");
        for (int k = 0; k < 3; ++k) {
            p.norm.lo[k] = n.at("lo").at(k).get<double>();
            p.norm.hi[k] = n.at("hi").at(k).get<double>();
        }
        p.norm.t_end = n.at("t_end").get<double>();
        for (const auto& l : j.at("layers")) {
            DenseLayer layer;
            const auto rows = l.at("rows").get<Eigen::Index>();
            const auto cols = l.at("cols").get<Eigen::Index>();
            const auto w = l.at("weight").get<std::vector<double>>();
            const auto b = l.at("bias").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
                throw Error("checkpoint layer has inconsistent sizes");
            }
            layer.weight.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index cc = 0; cc < cols; ++cc) layer.weight(r, cc) = w[static_cast<std::size_t>(r * cols + cc)];
            }
            layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
            p.layers.push_back(std::move(layer));
        }
        p.gate_logits = j.at("gate_logits").get<std::vector<double>>();
        if (p.parameter_count() != parameter_count(p.config)) throw Error("checkpoint does not match its config");
        return p;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
    write_text(path, checkpoint_json(params));
}

NetworkParams load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text(path)); }

}  // namespace heartinv
