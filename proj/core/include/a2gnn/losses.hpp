#pragma once

#include "a2gnn/gnn.hpp"
#include "a2gnn/label_map.hpp"

#include <vector>

namespace a2gnn {

// Per-box node selection for the multi-point loss: for every row and every
// column of a (node-grid) box, the node maximizing the box class probability.
// Duplicates are allowed; |nodes| = box height + box width.
struct MpSelection {
    struct BoxSelection {
        int box_index = 0;
        uint8_t cls = 0;
        std::vector<int> nodes;
    };
    std::vector<BoxSelection> selections;

    size_t total_nodes() const {
        size_t n = 0;
        for (const auto& s : selections) n += s.nodes.size();
        return n;
    }
};

// Argmax of the box-class probability along every row and column slice of
// each box; ties break to the smallest node index. Boxes with an empty range
// are skipped with a warning.
MpSelection select_mp_nodes(const ProbMap& o, const BoxSet& node_boxes, int grid_width,
                            int grid_height);

struct ScalarGrad {
    double value = 0.0;
    Mat d_o; // gradient w.r.t. the class probabilities
};

// Mean negative log probability of the true class over labeled nodes; empty
// label sets yield zero. Logs are clamped at 1e-12 with zero gradient in the
// clamped region.
ScalarGrad ce_loss(const ProbMap& o, const LabelMap& node_labels);

// Dense symmetric bandwidth matrix over all node pairs (zero diagonal).
std::vector<double> bandwidth_matrix(const PixelGraph& g, double sigma_xy = 6.0,
                                     double sigma_rgb = 0.1);

// Bandwidth-weighted disagreement between class distributions, summed over
// ordered node pairs and ordered distinct class pairs.
ScalarGrad reg_loss(const ProbMap& o, const std::vector<double>& bandwidth);
ScalarGrad reg_loss(const ProbMap& o, const PixelGraph& g, double sigma_xy = 6.0,
                    double sigma_rgb = 0.1);

struct MpLoss {
    double value = 0.0;
    double class_term = 0.0;   // pulls selected nodes toward the box class
    double feature_term = 0.0; // contracts selected features, in [0, 2]
    Mat d_o;
    Mat d_h; // gradient w.r.t. the final-layer features
};

// Multi-point loss over the selection; the selection itself is a constant
// (no gradient through the argmax). Ordered pairs of value-distinct selected
// nodes drive the feature term; if there are none it is zero.
MpLoss mp_loss(const ProbMap& o, const Mat& h_final, const MpSelection& sel);

struct ConsistencyOptions {
    double tau_cc = 0.0;     // keep a box-class seed iff cos(feature, prototype) > tau_cc
    bool strict_eq28 = false; // literal variant: keeps only box-class seeds with distance > 0
};

struct ConsistencyResult {
    LabelMap labels;
    int removed = 0;
};

// Removes box-class seeds whose final-layer features diverge from the box
// prototype (mean feature of the MP-selected nodes). Never introduces labels.
// In the default mode labels of other classes inside the box are untouched.
ConsistencyResult consistency_check(const Mat& h_final, const MpSelection& sel,
                                    const LabelMap& node_labels, const BoxSet& node_boxes,
                                    const ConsistencyOptions& opts = {});

struct JointLossOptions {
    int stage = 1; // 1: ce + mp; 2: adds the regularizer and consistency checking
    double lambda1 = 0.01;
    bool use_mp = true;
    bool use_reg = true;
    bool apply_cc = true;
    double tau_cc = 0.0;
    bool strict_eq28 = false;
    double sigma_xy = 6.0;
    double sigma_rgb = 0.1;
    // Optional cached bandwidth matrix (n x n); computed on the fly if null.
    const std::vector<double>* bandwidth = nullptr;
    // Optional frozen selection so the objective stays differentiable under
    // parameter perturbation (used by the gradient checker).
    const MpSelection* fixed_selection = nullptr;
};

struct LossReport {
    double ce = 0.0;
    double mp = 0.0;
    double reg = 0.0;
    double lambda1 = 0.01;
    double total = 0.0;
    int removed_seeds = 0;
    GnnGrads grads;
};

// The full training objective with reverse-mode gradients for all parameters.
LossReport joint_loss(const PixelGraph& g, const GnnParams& params, const ForwardTrace& trace,
                      const LabelMap& node_labels, const BoxSet& node_boxes,
                      const JointLossOptions& opts);

} // namespace a2gnn
