#pragma once

#include "a2gnn/graph.hpp"
#include "a2gnn/mat.hpp"

#include <cstdint>
#include <vector>

namespace a2gnn {

// Model parameters: an embedding matrix, one attention scalar per layer, an
// output matrix and the edge-gate weighting factor beta (not trained).
struct GnnParams {
    int in_dim = 0;
    int hidden_dim = 0;
    int n_classes = 0;
    int n_layers = 0;
    std::vector<double> w0;     // in_dim x hidden_dim
    std::vector<double> attn_w; // n_layers scalars
    std::vector<double> w_out;  // hidden_dim x n_classes
    double beta = 1.0;

    void validate() const;
    size_t n_parameters() const { return w0.size() + attn_w.size() + w_out.size(); }
};

// Everything the backward pass needs from one forward evaluation. The
// neighborhood pattern (S(i), always including i) and the edge weights are
// copied in so the trace stays valid on its own.
struct ForwardTrace {
    int n = 0;
    int d = 0;
    int c = 0;
    int n_layers = 0;
    bool training = false;
    double keep_prob = 1.0;

    std::vector<int> nb_start; // n + 1
    std::vector<int> nb_col;
    std::vector<double> nb_w;

    std::vector<double> z1;        // n x d pre-activation of the embedding layer
    std::vector<uint8_t> drop_mask; // n x d, only populated in training mode

    std::vector<Mat> h;                        // h[l] = features entering layer l+1; h[n_layers] is the final features
    std::vector<std::vector<double>> p;        // attention values aligned with nb_col, one per layer
    std::vector<std::vector<double>> cos_vals; // cosine per pattern entry, one per layer
    Mat o;                                     // n x c class probabilities
};

// Full forward pass: rectified embedding (with optional dropout), n_layers
// attention propagation steps, softmax output head. Deterministic given
// (params, seed, training). Throws if any intermediate turns non-finite,
// naming the layer.
ForwardTrace forward(const PixelGraph& g, const GnnParams& params, bool training,
                     uint64_t seed, double dropout_rate = 0.5);

struct GnnGrads {
    std::vector<double> w0;
    std::vector<double> attn_w;
    std::vector<double> w_out;

    void add_scaled(const GnnGrads& other, double s);
};

// Reverse-mode pass. d_o is the loss gradient w.r.t. the output probabilities
// O; d_h_last (may be empty) is an extra gradient w.r.t. the final features.
GnnGrads backward(const PixelGraph& g, const GnnParams& params, const ForwardTrace& trace,
                  const Mat& d_o, const Mat& d_h_last);

// Cosine similarity with the zero-vector convention cos(0, .) = 0.
double cosine(const double* a, const double* b, int n);

// TNSR serialization with named sections (W0, w, WL1, beta, dims).
struct Tnsr;
Tnsr params_to_tnsr(const GnnParams& p);
GnnParams params_from_tnsr(const Tnsr& t);

} // namespace a2gnn
