#pragma once

#include "a2gnn/label_map.hpp"
#include "a2gnn/mat.hpp"

#include <vector>

namespace a2gnn {

// Image-resolution class probabilities, pixel-major layout:
// data[(r*width + c)*channels + ch]; every pixel's class vector sums to 1.
struct DenseProbMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    DenseProbMap() = default;
    DenseProbMap(int w, int h, int c)
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0.0) {}

    const double* px(int r, int c) const {
        return data.data() + (static_cast<size_t>(r) * width + c) * channels;
    }
    double* px(int r, int c) { return data.data() + (static_cast<size_t>(r) * width + c) * channels; }
};

// Channel-wise bilinear interpolation from the node grid to image resolution
// (corner-aligned), renormalized per pixel.
DenseProbMap upsample_probs(const ProbMap& o, int grid_width, int grid_height, int out_width,
                            int out_height);

struct CrfConfig {
    int iterations = 10;
    double w1 = 4.0;          // appearance kernel weight
    double theta_alpha = 40.0; // appearance spatial bandwidth, pixels
    double theta_beta = 13.0;  // appearance color bandwidth, 0-255 units
    double w2 = 3.0;          // smoothness kernel weight
    double theta_gamma = 3.0;  // smoothness spatial bandwidth, pixels

    void validate() const;
};

// Brute-force mean-field refinement with Potts compatibility over all pixel
// pairs; exact (no lattice approximation) and limited to 16384 pixels.
DenseProbMap crf_refine(const DenseProbMap& p, const ImageRgb& image, const CrfConfig& cfg);

// Per-pixel argmax, ties to the lowest class id.
LabelMap to_labels(const DenseProbMap& p);

struct InstanceMask {
    int box_index = 0;
    uint8_t cls = 0;
    int width = 0;
    int height = 0;
    std::vector<uint8_t> mask; // 1 inside the instance, image-sized
    double confidence = 0.0;   // mean class probability over the mask
};

// One instance per box: the pixels inside the box labeled with the box class.
// A pixel claimed by several same-class boxes goes to the smallest-area one
// (ties to the lowest box index).
std::vector<InstanceMask> to_instances(const LabelMap& labels, const DenseProbMap& p,
                                       const BoxSet& boxes);

struct IouReport {
    std::vector<double> per_class; // NaN where the class never occurs
    double mean = 0.0;             // over defined classes only
};

// Intersection-over-union per class; ground-truth pixels marked unknown are
// excluded from every count.
IouReport miou(const LabelMap& pred, const LabelMap& gt, int n_classes);

} // namespace a2gnn
