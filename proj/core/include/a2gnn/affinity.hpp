#pragma once

#include "a2gnn/label_map.hpp"

#include <array>
#include <vector>

namespace a2gnn {

// Per-pixel feature vectors on a grid, pixel-major layout:
// data[(r*width + c)*channels + ch]. Embedder outputs are rectified, so
// values are non-negative there.
struct FeatureMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int w, int h, int c)
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0.0) {}

    const double* px(int idx) const { return data.data() + static_cast<size_t>(idx) * channels; }
    double* px(int idx) { return data.data() + static_cast<size_t>(idx) * channels; }
    int n_pixels() const { return width * height; }
};

// exp(-||F(i)-F(j)||_1 / channels), in (0, 1], 1 iff identical features.
double pair_affinity(const FeatureMap& f, int i, int j);

// Color+position bandwidth filter with unsquared L2 norms in the exponent and
// zero on the diagonal (identical positions are treated as the same pixel).
// Colors are expected on a unit range.
double gaussian_bandwidth(double row_i, double col_i, double row_j, double col_j,
                          const std::array<double, 3>& rgb_i, const std::array<double, 3>& rgb_j,
                          double sigma_xy = 6.0, double sigma_rgb = 0.1);

struct AffinityLoss {
    double loss = 0.0;
    std::vector<double> grad; // same layout as FeatureMap::data
};

// Binary cross-entropy over labeled pairs: positives push affinity to 1,
// negatives to 0. Log arguments are clamped below at 1e-12, and the gradient
// of a clamped term is zero so it stays the exact gradient of the computed
// value. Empty partitions contribute nothing.
AffinityLoss affinity_class_loss(const FeatureMap& f, const PairLabelSet& pairs);

// Bandwidth-weighted L1 smoothness over every unordered in-radius pixel pair;
// the first three descriptor channels of `colors` drive the color term.
AffinityLoss affinity_reg_loss(const FeatureMap& f, const std::vector<std::array<double, 3>>& colors,
                               double radius, double sigma_xy = 6.0, double sigma_rgb = 0.1);

} // namespace a2gnn
