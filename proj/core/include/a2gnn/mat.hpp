#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace a2gnn {

// Dense row-major double matrix. Deliberately minimal: the GNN forward and
// backward passes are written as explicit loops over rows.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// Per-node class probabilities, one row per node, rows sum to 1.
using ProbMap = Mat;

} // namespace a2gnn
