#include "a2gnn/graph.hpp"

#include "a2gnn/tnsr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace a2gnn {

double PixelGraph::edge_weight(int i, int j) const {
    for (int e = adj_start[i]; e < adj_start[i + 1]; ++e)
        if (adj_col[e] == j) return adj_w[e];
    return 0.0;
}

PixelGraph build_graph(const FeatureMap& f, const std::vector<std::array<double, 3>>& colors,
                       double radius, double sigma_edge, bool global_edges) {
    int n = f.n_pixels();
    if (colors.size() != static_cast<size_t>(n))
        throw std::invalid_argument("build_graph: color count mismatch");
    if (global_edges && n > 4096)
        throw std::invalid_argument("build_graph: global edges limited to 4096 nodes");
    if (!global_edges && !(radius > 0.0))
        throw std::invalid_argument("build_graph: radius must be positive");

    PixelGraph g;
    g.grid_width = f.width;
    g.grid_height = f.height;
    g.n_nodes = n;
    g.feat_dim = f.channels;
    g.coords.resize(n);
    g.colors = colors;

    // L1-normalized features (inputs are rectified, so row sums are plain sums).
    g.x.resize(static_cast<size_t>(n) * f.channels);
    for (int i = 0; i < n; ++i) {
        const double* src = f.px(i);
        double* dst = g.x.data() + static_cast<size_t>(i) * f.channels;
        double sum = 0.0;
        for (int k = 0; k < f.channels; ++k) {
            if (src[k] < 0.0) throw std::invalid_argument("build_graph: negative feature value");
            sum += src[k];
        }
        if (sum > 1e-12) {
            for (int k = 0; k < f.channels; ++k) dst[k] = src[k] / sum;
        } else {
            double u = 1.0 / f.channels;
            for (int k = 0; k < f.channels; ++k) dst[k] = u;
        }
    }
    for (int r = 0; r < f.height; ++r)
        for (int c = 0; c < f.width; ++c) g.coords[r * f.width + c] = {r, c};

    // Candidate neighbors per node; column-sorted falls out of the scan order.
    g.adj_start.assign(n + 1, 0);
    int R = global_edges ? 0 : static_cast<int>(std::floor(radius));
    double r2 = radius * radius;
    auto visit_candidates = [&](int i, auto&& fn) {
        int r = g.coords[i][0], c = g.coords[i][1];
        if (global_edges) {
            for (int j = 0; j < n; ++j) fn(j);
            return;
        }
        for (int dr = -R; dr <= R; ++dr) {
            int rj = r + dr;
            if (rj < 0 || rj >= f.height) continue;
            for (int dc = -R; dc <= R; ++dc) {
                int cj = c + dc;
                if (cj < 0 || cj >= f.width) continue;
                if (static_cast<double>(dr) * dr + static_cast<double>(dc) * dc > r2) continue;
                fn(rj * f.width + cj);
            }
        }
    };

    for (int i = 0; i < n; ++i) {
        visit_candidates(i, [&](int j) {
            if (j == i) {
                g.adj_col.push_back(i);
                g.adj_w.push_back(1.0);
                return;
            }
            double aff = pair_affinity(f, i, j);
            if (aff > sigma_edge) {
                g.adj_col.push_back(j);
                g.adj_w.push_back(aff);
            }
        });
        g.adj_start[i + 1] = static_cast<int>(g.adj_col.size());
    }
    return g;
}

void write_edge_list(const PixelGraph& g, std::ostream& out) {
    char buf[80];
    for (int i = 0; i < g.n_nodes; ++i) {
        for (int e = g.adj_start[i]; e < g.adj_start[i + 1]; ++e) {
            std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", i, g.adj_col[e], g.adj_w[e]);
            out << buf;
        }
    }
}

void write_edge_list_file(const PixelGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_edge_list_file: cannot write " + path);
    write_edge_list(g, out);
}

Tnsr graph_to_tnsr(const PixelGraph& g) {
    Tnsr t;
    t.add_f64("dims", {4},
              {static_cast<double>(g.grid_width), static_cast<double>(g.grid_height),
               static_cast<double>(g.n_nodes), static_cast<double>(g.feat_dim)});
    t.add_f64("X", {static_cast<uint64_t>(g.n_nodes), static_cast<uint64_t>(g.feat_dim)}, g.x);

    std::vector<double> coords(static_cast<size_t>(g.n_nodes) * 2);
    for (int i = 0; i < g.n_nodes; ++i) {
        coords[2 * i] = g.coords[i][0];
        coords[2 * i + 1] = g.coords[i][1];
    }
    t.add_f64("coords", {static_cast<uint64_t>(g.n_nodes), 2}, coords);

    std::vector<double> colors(static_cast<size_t>(g.n_nodes) * 3);
    for (int i = 0; i < g.n_nodes; ++i)
        for (int k = 0; k < 3; ++k) colors[3 * i + k] = g.colors[i][k];
    t.add_f64("colors", {static_cast<uint64_t>(g.n_nodes), 3}, colors);

    size_t nnz = g.adj_col.size();
    std::vector<double> edges(nnz * 3);
    for (int i = 0; i < g.n_nodes; ++i) {
        for (int e = g.adj_start[i]; e < g.adj_start[i + 1]; ++e) {
            edges[3 * static_cast<size_t>(e)] = i;
            edges[3 * static_cast<size_t>(e) + 1] = g.adj_col[e];
            edges[3 * static_cast<size_t>(e) + 2] = g.adj_w[e];
        }
    }
    t.add_f64("edges", {static_cast<uint64_t>(nnz), 3}, edges);
    return t;
}

PixelGraph graph_from_tnsr(const Tnsr& t) {
    PixelGraph g;
    std::vector<double> dims = t.at("dims").as_f64();
    if (dims.size() != 4) throw std::runtime_error("graph_from_tnsr: bad dims section");
    g.grid_width = static_cast<int>(dims[0]);
    g.grid_height = static_cast<int>(dims[1]);
    g.n_nodes = static_cast<int>(dims[2]);
    g.feat_dim = static_cast<int>(dims[3]);

    g.x = t.at("X").as_f64();
    if (g.x.size() != static_cast<size_t>(g.n_nodes) * g.feat_dim)
        throw std::runtime_error("graph_from_tnsr: X size mismatch");

    std::vector<double> coords = t.at("coords").as_f64();
    g.coords.resize(g.n_nodes);
    for (int i = 0; i < g.n_nodes; ++i)
        g.coords[i] = {static_cast<int>(coords[2 * i]), static_cast<int>(coords[2 * i + 1])};

    std::vector<double> colors = t.at("colors").as_f64();
    g.colors.resize(g.n_nodes);
    for (int i = 0; i < g.n_nodes; ++i)
        g.colors[i] = {colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]};

    std::vector<double> edges = t.at("edges").as_f64();
    size_t nnz = edges.size() / 3;
    g.adj_start.assign(g.n_nodes + 1, 0);
    g.adj_col.resize(nnz);
    g.adj_w.resize(nnz);
    int prev = -1;
    for (size_t e = 0; e < nnz; ++e) {
        int i = static_cast<int>(edges[3 * e]);
        if (i < prev) throw std::runtime_error("graph_from_tnsr: edge rows not sorted");
        while (prev < i) g.adj_start[++prev] = static_cast<int>(e);
        g.adj_col[e] = static_cast<int>(edges[3 * e + 1]);
        g.adj_w[e] = edges[3 * e + 2];
    }
    while (prev < g.n_nodes) g.adj_start[++prev] = static_cast<int>(nnz);
    return g;
}

} // namespace a2gnn
