#pragma once

#include "a2gnn/affinity.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace a2gnn {

// Weighted pixel graph: one node per grid cell, L1-normalized non-negative
// node features, symmetric affinity edges with self-loops stored as CSR
// (column-sorted within each row).
struct PixelGraph {
    int grid_width = 0;
    int grid_height = 0;
    int n_nodes = 0;
    int feat_dim = 0;
    std::vector<double> x;                      // n_nodes x feat_dim, rows sum to 1
    std::vector<std::array<int, 2>> coords;     // (row, col) per node
    std::vector<std::array<double, 3>> colors;  // unit-range RGB per node
    std::vector<int> adj_start;                 // n_nodes + 1
    std::vector<int> adj_col;
    std::vector<double> adj_w;

    const double* node_features(int i) const { return x.data() + static_cast<size_t>(i) * feat_dim; }
    int degree(int i) const { return adj_start[i + 1] - adj_start[i]; }
    double edge_weight(int i, int j) const; // 0 if absent
};

// Converts a rectified feature map into a graph. Edges keep the pairwise
// affinity when it exceeds sigma_edge (strict) and the pair is within
// `radius` grid cells; self-loops always carry weight 1. Feature rows are
// L1-normalized; an all-zero row falls back to uniform.
// With global_edges the radius restriction is lifted (allowed up to 4096
// nodes).
PixelGraph build_graph(const FeatureMap& f, const std::vector<std::array<double, 3>>& colors,
                       double radius = 5.0, double sigma_edge = 1e-3, bool global_edges = false);

// Plain-text `i j weight` lines sorted by (i, j), for diffing.
void write_edge_list(const PixelGraph& g, std::ostream& out);
void write_edge_list_file(const PixelGraph& g, const std::string& path);

// TNSR serialization.
struct Tnsr;
Tnsr graph_to_tnsr(const PixelGraph& g);
PixelGraph graph_from_tnsr(const Tnsr& t);

} // namespace a2gnn
