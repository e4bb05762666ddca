#include "a2gnn/config.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace a2gnn {

using nlohmann::json;

TrainConfig PipelineConfig::train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.stage_split = stage_split;
    t.learning_rate = learning_rate;
    t.weight_decay = weight_decay;
    t.dropout = dropout;
    t.lambda1 = lambda1;
    t.beta = beta;
    t.tau_cc = tau_cc;
    t.use_mp = use_mp;
    t.use_reg = use_reg;
    t.use_cc = use_cc;
    t.strict_eq28 = strict_eq28;
    t.seed = seed;
    t.adam = {adam_b1, adam_b2, adam_eps};
    t.hidden_dim = hidden_dim;
    t.n_layers = n_layers;
    t.n_classes = n_classes;
    t.sigma_xy = sigma_xy;
    t.sigma_rgb = sigma_rgb;
    return t;
}

EmbedderConfig PipelineConfig::embedder_config(uint64_t per_image_seed) const {
    EmbedderConfig e;
    e.hidden_dim = embed_hidden;
    e.out_dim = embed_dim;
    e.iterations = embed_iterations;
    e.learning_rate = embed_learning_rate;
    e.lambda = lambda;
    e.radius = radius;
    e.sigma_xy = sigma_xy;
    e.sigma_rgb = sigma_rgb;
    e.adam_b1 = adam_b1;
    e.adam_b2 = adam_b2;
    e.adam_eps = adam_eps;
    e.seed = per_image_seed;
    return e;
}

CrfConfig PipelineConfig::crf_config() const {
    CrfConfig c;
    c.iterations = crf_iterations;
    c.w1 = crf_w1;
    c.theta_alpha = crf_theta_alpha;
    c.theta_beta = crf_theta_beta;
    c.w2 = crf_w2;
    c.theta_gamma = crf_theta_gamma;
    return c;
}

namespace {

json to_json_obj(const PipelineConfig& c) {
    return json{{"n_classes", c.n_classes},
                {"stride", c.stride},
                {"ratio", c.ratio},
                {"radius", c.radius},
                {"sigma_edge", c.sigma_edge},
                {"lambda", c.lambda},
                {"lambda1", c.lambda1},
                {"sigma_xy", c.sigma_xy},
                {"sigma_rgb", c.sigma_rgb},
                {"tau_cc", c.tau_cc},
                {"strict_eq28", c.strict_eq28},
                {"global_edges", c.global_edges},
                {"use_mp", c.use_mp},
                {"use_reg", c.use_reg},
                {"use_cc", c.use_cc},
                {"embed_hidden", c.embed_hidden},
                {"embed_dim", c.embed_dim},
                {"embed_iterations", c.embed_iterations},
                {"embed_learning_rate", c.embed_learning_rate},
                {"hidden_dim", c.hidden_dim},
                {"n_layers", c.n_layers},
                {"beta", c.beta},
                {"epochs", c.epochs},
                {"stage_split", c.stage_split},
                {"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"dropout", c.dropout},
                {"adam_b1", c.adam_b1},
                {"adam_b2", c.adam_b2},
                {"adam_eps", c.adam_eps},
                {"seed", c.seed},
                {"crf_iterations", c.crf_iterations},
                {"crf_w1", c.crf_w1},
                {"crf_theta_alpha", c.crf_theta_alpha},
                {"crf_theta_beta", c.crf_theta_beta},
                {"crf_w2", c.crf_w2},
                {"crf_theta_gamma", c.crf_theta_gamma}};
}

} // namespace

std::string PipelineConfig::to_json() const {
    return to_json_obj(*this).dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");

    PipelineConfig c;
    json known = to_json_obj(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key))
            throw std::invalid_argument("config: unknown key \"" + key + "\"");
        (void)value;
    }

    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("n_classes", c.n_classes);
    get("stride", c.stride);
    get("ratio", c.ratio);
    get("radius", c.radius);
    get("sigma_edge", c.sigma_edge);
    get("lambda", c.lambda);
    get("lambda1", c.lambda1);
    get("sigma_xy", c.sigma_xy);
    get("sigma_rgb", c.sigma_rgb);
    get("tau_cc", c.tau_cc);
    get("strict_eq28", c.strict_eq28);
    get("global_edges", c.global_edges);
    get("use_mp", c.use_mp);
    get("use_reg", c.use_reg);
    get("use_cc", c.use_cc);
    get("embed_hidden", c.embed_hidden);
    get("embed_dim", c.embed_dim);
    get("embed_iterations", c.embed_iterations);
    get("embed_learning_rate", c.embed_learning_rate);
    get("hidden_dim", c.hidden_dim);
    get("n_layers", c.n_layers);
    get("beta", c.beta);
    get("epochs", c.epochs);
    get("stage_split", c.stage_split);
    get("learning_rate", c.learning_rate);
    get("weight_decay", c.weight_decay);
    get("dropout", c.dropout);
    get("adam_b1", c.adam_b1);
    get("adam_b2", c.adam_b2);
    get("adam_eps", c.adam_eps);
    get("seed", c.seed);
    get("crf_iterations", c.crf_iterations);
    get("crf_w1", c.crf_w1);
    get("crf_theta_alpha", c.crf_theta_alpha);
    get("crf_theta_beta", c.crf_theta_beta);
    get("crf_w2", c.crf_w2);
    get("crf_theta_gamma", c.crf_theta_gamma);

    if (c.stride < 1) throw std::invalid_argument("config: stride must be >= 1");
    if (!(c.ratio > 0.0 && c.ratio <= 1.0))
        throw std::invalid_argument("config: ratio must be in (0,1]");
    c.train_config().validate();
    c.crf_config().validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void PipelineConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << to_json();
}

} // namespace a2gnn
