#include "a2gnn/losses.hpp"

#include "a2gnn/affinity.hpp"
#include "a2gnn/log.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace a2gnn {

namespace {

constexpr double kLogClamp = 1e-12;

} // namespace

MpSelection select_mp_nodes(const ProbMap& o, const BoxSet& node_boxes, int grid_width,
                            int grid_height) {
    MpSelection sel;
    for (size_t b = 0; b < node_boxes.size(); ++b) {
        const Box& box = node_boxes.boxes[b];
        if (box.empty() || box.x0 < 0 || box.y0 < 0 || box.x1 > grid_width ||
            box.y1 > grid_height) {
            log_info("select_mp_nodes: skipping degenerate or out-of-grid box " + std::to_string(b));
            continue;
        }
        if (box.cls >= o.cols)
            throw std::invalid_argument("select_mp_nodes: box class out of range");

        MpSelection::BoxSelection bs;
        bs.box_index = static_cast<int>(b);
        bs.cls = static_cast<uint8_t>(box.cls);
        bs.nodes.reserve(static_cast<size_t>(box.height() + box.width()));
        for (int r = box.y0; r < box.y1; ++r) {
            int best = r * grid_width + box.x0;
            double best_p = o(best, box.cls);
            for (int c = box.x0 + 1; c < box.x1; ++c) {
                int node = r * grid_width + c;
                if (o(node, box.cls) > best_p) {
                    best_p = o(node, box.cls);
                    best = node;
                }
            }
            bs.nodes.push_back(best);
        }
        for (int c = box.x0; c < box.x1; ++c) {
            int best = box.y0 * grid_width + c;
            double best_p = o(best, box.cls);
            for (int r = box.y0 + 1; r < box.y1; ++r) {
                int node = r * grid_width + c;
                if (o(node, box.cls) > best_p) {
                    best_p = o(node, box.cls);
                    best = node;
                }
            }
            bs.nodes.push_back(best);
        }
        sel.selections.push_back(std::move(bs));
    }
    return sel;
}

ScalarGrad ce_loss(const ProbMap& o, const LabelMap& node_labels) {
    if (static_cast<size_t>(o.rows) != node_labels.size())
        throw std::invalid_argument("ce_loss: label count does not match node count");
    ScalarGrad out;
    out.d_o = Mat(o.rows, o.cols);

    size_t n_labeled = 0;
    for (uint8_t l : node_labels.data)
        if (l != LabelMap::kUnknown) ++n_labeled;
    if (n_labeled == 0) return out;

    double inv = 1.0 / static_cast<double>(n_labeled);
    for (int v = 0; v < o.rows; ++v) {
        uint8_t l = node_labels.data[v];
        if (l == LabelMap::kUnknown) continue;
        if (l >= o.cols)
            throw std::invalid_argument("ce_loss: label id out of class range");
        double p = o(v, l);
        out.value -= std::log(std::max(p, kLogClamp)) * inv;
        if (p > kLogClamp) out.d_o(v, l) = -inv / p;
    }
    return out;
}

std::vector<double> bandwidth_matrix(const PixelGraph& g, double sigma_xy, double sigma_rgb) {
    int n = g.n_nodes;
    std::vector<double> gm(static_cast<size_t>(n) * n, 0.0);
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            double v = gaussian_bandwidth(g.coords[a][0], g.coords[a][1], g.coords[b][0],
                                          g.coords[b][1], g.colors[a], g.colors[b], sigma_xy,
                                          sigma_rgb);
            gm[static_cast<size_t>(a) * n + b] = v;
            gm[static_cast<size_t>(b) * n + a] = v;
        }
    }
    return gm;
}

ScalarGrad reg_loss(const ProbMap& o, const std::vector<double>& bandwidth) {
    int n = o.rows, c = o.cols;
    if (bandwidth.size() != static_cast<size_t>(n) * n)
        throw std::invalid_argument("reg_loss: bandwidth matrix size mismatch");

    // Sum over ordered pairs (a,b) of G(a,b) * (S_a S_b - <O(a), O(b)>) where
    // S is the row sum; identical to summing the distinct-class products.
    std::vector<double> rowsum(n, 0.0);
    for (int a = 0; a < n; ++a) {
        const double* oa = o.row(a);
        for (int k = 0; k < c; ++k) rowsum[a] += oa[k];
    }

    ScalarGrad out;
    out.d_o = Mat(n, c);
    std::vector<double> gp(static_cast<size_t>(n) * c, 0.0); // G * O
    std::vector<double> gs(n, 0.0);                          // G * S
    for (int a = 0; a < n; ++a) {
        const double* grow = bandwidth.data() + static_cast<size_t>(a) * n;
        double* gpa = gp.data() + static_cast<size_t>(a) * c;
        for (int b = 0; b < n; ++b) {
            double w = grow[b];
            if (w == 0.0) continue;
            gs[a] += w * rowsum[b];
            const double* ob = o.row(b);
            for (int k = 0; k < c; ++k) gpa[k] += w * ob[k];
        }
    }
    for (int a = 0; a < n; ++a) {
        const double* oa = o.row(a);
        const double* gpa = gp.data() + static_cast<size_t>(a) * c;
        double dot = 0.0;
        for (int k = 0; k < c; ++k) dot += oa[k] * gpa[k];
        out.value += rowsum[a] * gs[a] - dot;
        double* da = out.d_o.row(a);
        // Symmetric G makes the a-side and b-side contributions equal.
        for (int k = 0; k < c; ++k) da[k] = 2.0 * (gs[a] - gpa[k]);
    }
    return out;
}

ScalarGrad reg_loss(const ProbMap& o, const PixelGraph& g, double sigma_xy, double sigma_rgb) {
    return reg_loss(o, bandwidth_matrix(g, sigma_xy, sigma_rgb));
}

MpLoss mp_loss(const ProbMap& o, const Mat& h_final, const MpSelection& sel) {
    MpLoss out;
    out.d_o = Mat(o.rows, o.cols);
    out.d_h = Mat(h_final.rows, h_final.cols);
    int d = h_final.cols;

    size_t n_points = sel.total_nodes();
    if (n_points > 0) {
        double inv = 1.0 / static_cast<double>(n_points);
        for (const auto& bs : sel.selections) {
            for (int node : bs.nodes) {
                double p = o(node, bs.cls);
                out.class_term -= std::log(std::max(p, kLogClamp)) * inv;
                if (p > kLogClamp) out.d_o(node, bs.cls) -= inv / p;
            }
        }
    }

    // Ordered pairs of value-distinct selected nodes within each box.
    size_t n_pairs = 0;
    for (const auto& bs : sel.selections) {
        for (size_t a = 0; a < bs.nodes.size(); ++a)
            for (size_t b = 0; b < bs.nodes.size(); ++b)
                if (bs.nodes[a] != bs.nodes[b]) ++n_pairs;
    }
    if (n_pairs > 0) {
        double inv = 1.0 / static_cast<double>(n_pairs);
        for (const auto& bs : sel.selections) {
            for (size_t a = 0; a < bs.nodes.size(); ++a) {
                for (size_t b = 0; b < bs.nodes.size(); ++b) {
                    int ka = bs.nodes[a], kb = bs.nodes[b];
                    if (ka == kb) continue;
                    const double* ha = h_final.row(ka);
                    const double* hb = h_final.row(kb);
                    double na = 0.0, nb = 0.0, dot = 0.0;
                    for (int k = 0; k < d; ++k) {
                        na += ha[k] * ha[k];
                        nb += hb[k] * hb[k];
                        dot += ha[k] * hb[k];
                    }
                    if (na <= 0.0 || nb <= 0.0) {
                        out.feature_term += 1.0 * inv; // cos of a zero vector is 0
                        continue;
                    }
                    na = std::sqrt(na);
                    nb = std::sqrt(nb);
                    double cs = dot / (na * nb);
                    out.feature_term += (1.0 - cs) * inv;
                    double* da = out.d_h.row(ka);
                    double* db = out.d_h.row(kb);
                    double inv_ab = 1.0 / (na * nb);
                    for (int k = 0; k < d; ++k) {
                        da[k] -= inv * (hb[k] * inv_ab - cs * ha[k] / (na * na));
                        db[k] -= inv * (ha[k] * inv_ab - cs * hb[k] / (nb * nb));
                    }
                }
            }
        }
    }
    out.value = out.class_term + out.feature_term;
    return out;
}

ConsistencyResult consistency_check(const Mat& h_final, const MpSelection& sel,
                                    const LabelMap& node_labels, const BoxSet& node_boxes,
                                    const ConsistencyOptions& opts) {
    ConsistencyResult res;
    res.labels = node_labels;
    int grid_width = node_labels.width;
    int d = h_final.cols;

    std::vector<double> proto(d);
    for (const auto& bs : sel.selections) {
        if (bs.nodes.empty()) continue;
        const Box& box = node_boxes.boxes[bs.box_index];

        std::fill(proto.begin(), proto.end(), 0.0);
        for (int node : bs.nodes) {
            const double* h = h_final.row(node);
            for (int k = 0; k < d; ++k) proto[k] += h[k];
        }
        double inv = 1.0 / static_cast<double>(bs.nodes.size());
        for (int k = 0; k < d; ++k) proto[k] *= inv;

        for (int r = box.y0; r < box.y1; ++r) {
            for (int c = box.x0; c < box.x1; ++c) {
                size_t p = static_cast<size_t>(r) * grid_width + c;
                uint8_t label = res.labels.data[p];
                if (label == LabelMap::kUnknown) continue;
                double cs = cosine(h_final.row(static_cast<int>(p)), proto.data(), d);
                bool keep;
                if (opts.strict_eq28) {
                    // Literal rule: keep only box-class seeds whose cosine
                    // distance to the prototype is strictly positive;
                    // everything else inside the box is dropped.
                    keep = label == bs.cls && (1.0 - cs) > 0.0;
                } else {
                    if (label != bs.cls) continue; // other classes untouched
                    keep = cs > opts.tau_cc;
                }
                if (!keep) {
                    res.labels.data[p] = LabelMap::kUnknown;
                    ++res.removed;
                }
            }
        }
    }
    return res;
}

LossReport joint_loss(const PixelGraph& g, const GnnParams& params, const ForwardTrace& trace,
                      const LabelMap& node_labels, const BoxSet& node_boxes,
                      const JointLossOptions& opts) {
    if (opts.stage != 1 && opts.stage != 2)
        throw std::invalid_argument("joint_loss: stage must be 1 or 2");
    if (node_labels.width != g.grid_width || node_labels.height != g.grid_height)
        throw std::invalid_argument("joint_loss: node labels do not match the graph grid");

    LossReport report;
    report.lambda1 = opts.lambda1;

    bool need_selection = opts.use_mp || (opts.stage == 2 && opts.apply_cc);
    MpSelection local_sel;
    const MpSelection* sel = opts.fixed_selection;
    if (sel == nullptr && need_selection) {
        local_sel = select_mp_nodes(trace.o, node_boxes, g.grid_width, g.grid_height);
        sel = &local_sel;
    }

    const Mat& h_final = trace.h[trace.n_layers];
    const LabelMap* labels_used = &node_labels;
    LabelMap checked;
    if (opts.stage == 2 && opts.apply_cc && sel != nullptr) {
        ConsistencyResult cc =
            consistency_check(h_final, *sel, node_labels, node_boxes,
                              {.tau_cc = opts.tau_cc, .strict_eq28 = opts.strict_eq28});
        checked = std::move(cc.labels);
        report.removed_seeds = cc.removed;
        labels_used = &checked;
    }

    ScalarGrad ce = ce_loss(trace.o, *labels_used);
    report.ce = ce.value;
    Mat d_o = std::move(ce.d_o);
    Mat d_h;

    if (opts.use_mp && sel != nullptr) {
        MpLoss mp = mp_loss(trace.o, h_final, *sel);
        report.mp = mp.value;
        for (size_t i = 0; i < d_o.v.size(); ++i) d_o.v[i] += mp.d_o.v[i];
        d_h = std::move(mp.d_h);
    }

    if (opts.stage == 2 && opts.use_reg) {
        ScalarGrad rg = opts.bandwidth != nullptr
                            ? reg_loss(trace.o, *opts.bandwidth)
                            : reg_loss(trace.o, g, opts.sigma_xy, opts.sigma_rgb);
        report.reg = rg.value;
        for (size_t i = 0; i < d_o.v.size(); ++i) d_o.v[i] += opts.lambda1 * rg.d_o.v[i];
    }

    report.total = report.ce + report.mp + (opts.stage == 2 ? opts.lambda1 * report.reg : 0.0);
    report.grads = backward(g, params, trace, d_o, d_h);
    return report;
}

} // namespace a2gnn
