#pragma once

#include "a2gnn/embedder.hpp"
#include "a2gnn/refine.hpp"
#include "a2gnn/trainer.hpp"

#include <cstdint>
#include <string>

namespace a2gnn {

// One flat document holding every tunable of the pipeline, so a run is
// reproducible from a single artifact. Unknown keys are rejected.
struct PipelineConfig {
    int n_classes = 21;
    int stride = 2;
    double ratio = 0.4;       // confident-seed fraction
    double radius = 5.0;      // pair radius, node-grid cells
    double sigma_edge = 1e-3; // edge cut threshold
    double lambda = 3.0;      // smoothness weight for the embedder loss
    double lambda1 = 0.01;    // regularizer weight in the joint loss
    double sigma_xy = 6.0;
    double sigma_rgb = 0.1;
    double tau_cc = 0.0;
    bool strict_eq28 = false;
    bool global_edges = false;
    bool use_mp = true;
    bool use_reg = true;
    bool use_cc = true;

    int embed_hidden = 32;
    int embed_dim = 64;
    int embed_iterations = 200;
    double embed_learning_rate = 0.01;

    int hidden_dim = 256;
    int n_layers = 3;
    double beta = 1.0;

    int epochs = 100;
    int stage_split = 50;
    double learning_rate = 0.03;
    double weight_decay = 5e-4;
    double dropout = 0.5;
    double adam_b1 = 0.9;
    double adam_b2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;

    int crf_iterations = 10;
    double crf_w1 = 4.0;
    double crf_theta_alpha = 40.0;
    double crf_theta_beta = 13.0;
    double crf_w2 = 3.0;
    double crf_theta_gamma = 3.0;

    TrainConfig train_config() const;
    EmbedderConfig embedder_config(uint64_t per_image_seed) const;
    CrfConfig crf_config() const;

    std::string to_json() const; // canonical, key-sorted
    static PipelineConfig from_json(const std::string& text);
    static PipelineConfig load(const std::string& path);
    void save(const std::string& path) const;
};

} // namespace a2gnn
