#pragma once

#include "a2gnn/affinity.hpp"
#include "a2gnn/label_map.hpp"

#include <cstdint>
#include <vector>

namespace a2gnn {

// Raw per-pixel inputs for the embedder: channels 0..2 are RGB on [0,1],
// channels 3..4 are normalized (row, col). Extra channels may follow.
using DescriptorGrid = FeatureMap;

DescriptorGrid make_descriptors(int width, int height,
                                const std::vector<std::array<double, 3>>& colors);

// Two affine stages with rectification between and after, so outputs are
// non-negative and row-normalizable.
struct Embedder {
    int in_dim = 0;
    int hidden_dim = 0;
    int out_dim = 0;
    std::vector<double> w1; // hidden_dim x in_dim
    std::vector<double> b1;
    std::vector<double> w2; // out_dim x hidden_dim
    std::vector<double> b2;

    FeatureMap apply(const DescriptorGrid& x) const;
};

struct EmbedderConfig {
    int hidden_dim = 32;
    int out_dim = 64;
    int iterations = 200;
    double learning_rate = 0.01;
    double lambda = 3.0; // weight of the smoothness term
    double radius = 5.0;
    double sigma_xy = 6.0;
    double sigma_rgb = 0.1;
    double adam_b1 = 0.9;
    double adam_b2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
};

struct EmbedderResult {
    Embedder embedder;
    std::vector<double> loss_trace; // one entry per iteration
};

// Full-batch Adam on both affinity losses. Deterministic given the seed;
// aborts with a diagnostic if the loss turns non-finite.
EmbedderResult train_embedder(const DescriptorGrid& descriptors, const PairLabelSet& pairs,
                              const EmbedderConfig& cfg);

// One embedder shared across a corpus: per-iteration gradients are averaged
// over the images. Keeps every image in a single feature space, which the
// shared propagation model downstream requires.
EmbedderResult train_embedder_corpus(const std::vector<DescriptorGrid>& descriptors,
                                     const std::vector<PairLabelSet>& pairs,
                                     const EmbedderConfig& cfg);

struct Tnsr;
Tnsr embedder_to_tnsr(const Embedder& e);
Embedder embedder_from_tnsr(const Tnsr& t);

} // namespace a2gnn
