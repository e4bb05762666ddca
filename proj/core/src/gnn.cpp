#include "a2gnn/gnn.hpp"

#include "a2gnn/rng.hpp"
#include "a2gnn/tnsr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace a2gnn {

void GnnParams::validate() const {
    if (n_layers < 1) throw std::invalid_argument("GnnParams: n_layers must be >= 1");
    if (in_dim < 1 || hidden_dim < 1 || n_classes < 1)
        throw std::invalid_argument("GnnParams: dimensions must be positive");
    if (w0.size() != static_cast<size_t>(in_dim) * hidden_dim ||
        attn_w.size() != static_cast<size_t>(n_layers) ||
        w_out.size() != static_cast<size_t>(hidden_dim) * n_classes)
        throw std::invalid_argument("GnnParams: parameter block size mismatch");
    if (!(beta >= 0.0)) throw std::invalid_argument("GnnParams: beta must be non-negative");
}

void GnnGrads::add_scaled(const GnnGrads& other, double s) {
    for (size_t i = 0; i < w0.size(); ++i) w0[i] += s * other.w0[i];
    for (size_t i = 0; i < attn_w.size(); ++i) attn_w[i] += s * other.attn_w[i];
    for (size_t i = 0; i < w_out.size(); ++i) w_out[i] += s * other.w_out[i];
}

double cosine(const double* a, const double* b, int n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int k = 0; k < n; ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

void check_finite(const std::vector<double>& v, const char* what, int layer) {
    for (double x : v)
        if (!std::isfinite(x))
            throw std::runtime_error(std::string("forward: non-finite ") + what + " at layer " +
                                     std::to_string(layer));
}

// Copies the adjacency and inserts missing self-loops (weight 0 for the edge
// term; the node still attends to itself).
void build_pattern(const PixelGraph& g, ForwardTrace& t) {
    t.nb_start.assign(g.n_nodes + 1, 0);
    t.nb_col.clear();
    t.nb_w.clear();
    t.nb_col.reserve(g.adj_col.size() + g.n_nodes);
    t.nb_w.reserve(g.adj_col.size() + g.n_nodes);
    for (int i = 0; i < g.n_nodes; ++i) {
        bool has_self = false;
        bool inserted = false;
        for (int e = g.adj_start[i]; e < g.adj_start[i + 1]; ++e) {
            int j = g.adj_col[e];
            if (j == i) has_self = true;
            if (!has_self && !inserted && j > i) {
                t.nb_col.push_back(i);
                t.nb_w.push_back(0.0);
                inserted = true;
            }
            t.nb_col.push_back(j);
            t.nb_w.push_back(g.adj_w[e]);
        }
        if (!has_self && !inserted) {
            t.nb_col.push_back(i);
            t.nb_w.push_back(0.0);
        }
        t.nb_start[i + 1] = static_cast<int>(t.nb_col.size());
    }
}

} // namespace

ForwardTrace forward(const PixelGraph& g, const GnnParams& params, bool training,
                     uint64_t seed, double dropout_rate) {
    params.validate();
    if (params.in_dim != g.feat_dim)
        throw std::invalid_argument("forward: graph feature dim does not match params");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("forward: dropout rate must be in [0,1)");

    int n = g.n_nodes;
    int d = params.hidden_dim;
    ForwardTrace t;
    t.n = n;
    t.d = d;
    t.c = params.n_classes;
    t.n_layers = params.n_layers;
    t.training = training;
    build_pattern(g, t);

    // Embedding layer.
    t.z1.assign(static_cast<size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* xi = g.node_features(i);
        double* zi = t.z1.data() + static_cast<size_t>(i) * d;
        for (int k = 0; k < params.in_dim; ++k) {
            double xv = xi[k];
            if (xv == 0.0) continue;
            const double* wrow = params.w0.data() + static_cast<size_t>(k) * d;
            for (int jd = 0; jd < d; ++jd) zi[jd] += xv * wrow[jd];
        }
    }
    check_finite(t.z1, "embedding pre-activation", 0);

    t.h.assign(params.n_layers + 1, Mat(n, d));
    Mat& h1 = t.h[0];
    t.keep_prob = training && dropout_rate > 0.0 ? 1.0 - dropout_rate : 1.0;
    if (training && dropout_rate > 0.0) {
        Rng rng(mix_seed(seed, 0xd20f0u));
        t.drop_mask.assign(static_cast<size_t>(n) * d, 1);
        for (size_t i = 0; i < t.drop_mask.size(); ++i)
            t.drop_mask[i] = rng.uniform() < t.keep_prob ? 1 : 0;
        for (size_t i = 0; i < h1.v.size(); ++i) {
            double a = t.z1[i] > 0.0 ? t.z1[i] : 0.0;
            h1.v[i] = t.drop_mask[i] ? a / t.keep_prob : 0.0;
        }
    } else {
        for (size_t i = 0; i < h1.v.size(); ++i) h1.v[i] = t.z1[i] > 0.0 ? t.z1[i] : 0.0;
    }

    // Attention propagation layers.
    t.p.assign(params.n_layers, {});
    t.cos_vals.assign(params.n_layers, {});
    std::vector<double> norms(n);
    for (int l = 0; l < params.n_layers; ++l) {
        const Mat& hin = t.h[l];
        Mat& hout = t.h[l + 1];
        double wl = params.attn_w[l];
        auto& pvals = t.p[l];
        auto& cvals = t.cos_vals[l];
        pvals.assign(t.nb_col.size(), 0.0);
        cvals.assign(t.nb_col.size(), 0.0);

        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = hin.row(i);
            for (int k = 0; k < d; ++k) s += row[k] * row[k];
            norms[i] = std::sqrt(s);
        }

        for (int i = 0; i < n; ++i) {
            int e0 = t.nb_start[i], e1 = t.nb_start[i + 1];
            const double* hi = hin.row(i);
            double max_logit = -1e300;
            for (int e = e0; e < e1; ++e) {
                int j = t.nb_col[e];
                double cs;
                if (norms[i] <= 0.0 || norms[j] <= 0.0) {
                    cs = 0.0;
                } else {
                    double dot = 0.0;
                    const double* hj = hin.row(j);
                    for (int k = 0; k < d; ++k) dot += hi[k] * hj[k];
                    cs = dot / (norms[i] * norms[j]);
                }
                cvals[e] = cs;
                double logit = wl * cs + (cs > 0.0 ? params.beta * t.nb_w[e] : 0.0);
                pvals[e] = logit; // reused as logit storage until the softmax below
                if (logit > max_logit) max_logit = logit;
            }
            double sum = 0.0;
            for (int e = e0; e < e1; ++e) {
                pvals[e] = std::exp(pvals[e] - max_logit);
                sum += pvals[e];
            }
            double* out = hout.row(i);
            for (int e = e0; e < e1; ++e) {
                pvals[e] /= sum;
                const double* hj = hin.row(t.nb_col[e]);
                double pw = pvals[e];
                for (int k = 0; k < d; ++k) out[k] += pw * hj[k];
            }
        }
        check_finite(hout.v, "features", l + 1);
    }

    // Output head.
    const Mat& hl = t.h[params.n_layers];
    t.o = Mat(n, params.n_classes);
    for (int i = 0; i < n; ++i) {
        const double* hi = hl.row(i);
        double* oi = t.o.row(i);
        for (int k = 0; k < d; ++k) {
            double hv = hi[k];
            if (hv == 0.0) continue;
            const double* wrow = params.w_out.data() + static_cast<size_t>(k) * params.n_classes;
            for (int c = 0; c < params.n_classes; ++c) oi[c] += hv * wrow[c];
        }
        double mx = oi[0];
        for (int c = 1; c < params.n_classes; ++c) mx = std::max(mx, oi[c]);
        double sum = 0.0;
        for (int c = 0; c < params.n_classes; ++c) {
            oi[c] = std::exp(oi[c] - mx);
            sum += oi[c];
        }
        for (int c = 0; c < params.n_classes; ++c) oi[c] /= sum;
    }
    check_finite(t.o.v, "output probabilities", params.n_layers + 1);
    return t;
}

GnnGrads backward(const PixelGraph& g, const GnnParams& params, const ForwardTrace& t,
                  const Mat& d_o, const Mat& d_h_last) {
    int n = t.n, d = t.d, nc = t.c;
    GnnGrads grads;
    grads.w0.assign(params.w0.size(), 0.0);
    grads.attn_w.assign(params.attn_w.size(), 0.0);
    grads.w_out.assign(params.w_out.size(), 0.0);

    // Softmax head backward: d_logits(i,k) = O(i,k) * (dO(i,k) - sum_c O(i,c) dO(i,c)).
    Mat dlogits(n, nc);
    for (int i = 0; i < n; ++i) {
        const double* oi = t.o.row(i);
        const double* doi = d_o.row(i);
        double dot = 0.0;
        for (int c = 0; c < nc; ++c) dot += oi[c] * doi[c];
        double* dl = dlogits.row(i);
        for (int c = 0; c < nc; ++c) dl[c] = oi[c] * (doi[c] - dot);
    }

    const Mat& hl = t.h[t.n_layers];
    Mat dh(n, d);
    for (int i = 0; i < n; ++i) {
        const double* hi = hl.row(i);
        const double* dl = dlogits.row(i);
        double* dhi = dh.row(i);
        for (int k = 0; k < d; ++k) {
            double* gw = grads.w_out.data() + static_cast<size_t>(k) * nc;
            const double* wr = params.w_out.data() + static_cast<size_t>(k) * nc;
            double hv = hi[k];
            double acc = 0.0;
            for (int c = 0; c < nc; ++c) {
                gw[c] += hv * dl[c];
                acc += wr[c] * dl[c];
            }
            dhi[k] = acc;
        }
    }
    if (d_h_last.size() > 0) {
        for (size_t i = 0; i < dh.v.size(); ++i) dh.v[i] += d_h_last.v[i];
    }

    // Attention layers, deepest first.
    std::vector<double> norms(n);
    for (int l = t.n_layers - 1; l >= 0; --l) {
        const Mat& hin = t.h[l];
        const auto& pvals = t.p[l];
        const auto& cvals = t.cos_vals[l];
        double wl = params.attn_w[l];
        Mat dh_in(n, d);

        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = hin.row(i);
            for (int k = 0; k < d; ++k) s += row[k] * row[k];
            norms[i] = std::sqrt(s);
        }

        for (int i = 0; i < n; ++i) {
            int e0 = t.nb_start[i], e1 = t.nb_start[i + 1];
            const double* dout = dh.row(i);

            // dP per pattern entry and the softmax row reduction.
            double srow = 0.0;
            // Two passes: first accumulate s = sum_e P_e * dP_e, then apply.
            // dP_e is recomputed in the second pass to avoid a scratch array.
            for (int e = e0; e < e1; ++e) {
                const double* hj = hin.row(t.nb_col[e]);
                double dp = 0.0;
                for (int k = 0; k < d; ++k) dp += dout[k] * hj[k];
                srow += pvals[e] * dp;
            }
            const double* hi = hin.row(i);
            for (int e = e0; e < e1; ++e) {
                int j = t.nb_col[e];
                const double* hj = hin.row(j);
                double dp = 0.0;
                for (int k = 0; k < d; ++k) dp += dout[k] * hj[k];
                double dlogit = pvals[e] * (dp - srow);

                grads.attn_w[l] += cvals[e] * dlogit;

                // Direct aggregation path H_out(i) = sum_j P(i,j) H(j).
                double pw = pvals[e];
                double* dhj = dh_in.row(j);
                for (int k = 0; k < d; ++k) dhj[k] += pw * dout[k];

                // Cosine path; the edge gate is a step function and
                // contributes no gradient.
                double dcos = wl * dlogit;
                if (dcos != 0.0 && norms[i] > 0.0 && norms[j] > 0.0) {
                    double inv_ij = 1.0 / (norms[i] * norms[j]);
                    double cs = cvals[e];
                    double inv_i2 = 1.0 / (norms[i] * norms[i]);
                    double inv_j2 = 1.0 / (norms[j] * norms[j]);
                    double* dhi = dh_in.row(i);
                    for (int k = 0; k < d; ++k) {
                        dhi[k] += dcos * (hj[k] * inv_ij - cs * hi[k] * inv_i2);
                        dhj[k] += dcos * (hi[k] * inv_ij - cs * hj[k] * inv_j2);
                    }
                }
            }
        }
        dh = std::move(dh_in);
    }

    // Embedding layer backward: dropout, rectifier, then dW0 = X^T dZ1.
    for (int i = 0; i < n; ++i) {
        double* dhi = dh.row(i);
        const double* z = t.z1.data() + static_cast<size_t>(i) * d;
        const uint8_t* mask = t.drop_mask.empty() ? nullptr : t.drop_mask.data() + static_cast<size_t>(i) * d;
        for (int k = 0; k < d; ++k) {
            double gv = dhi[k];
            if (mask != nullptr) gv = mask[k] ? gv / t.keep_prob : 0.0;
            dhi[k] = z[k] > 0.0 ? gv : 0.0;
        }
        const double* xi = g.node_features(i);
        for (int k = 0; k < params.in_dim; ++k) {
            double xv = xi[k];
            if (xv == 0.0) continue;
            double* gw = grads.w0.data() + static_cast<size_t>(k) * d;
            for (int jd = 0; jd < d; ++jd) gw[jd] += xv * dhi[jd];
        }
    }
    return grads;
}

Tnsr params_to_tnsr(const GnnParams& p) {
    Tnsr t;
    t.add_f64("dims", {4},
              {static_cast<double>(p.in_dim), static_cast<double>(p.hidden_dim),
               static_cast<double>(p.n_classes), static_cast<double>(p.n_layers)});
    t.add_f64("W0", {static_cast<uint64_t>(p.in_dim), static_cast<uint64_t>(p.hidden_dim)}, p.w0);
    t.add_f64("w", {static_cast<uint64_t>(p.n_layers)}, p.attn_w);
    t.add_f64("WL1", {static_cast<uint64_t>(p.hidden_dim), static_cast<uint64_t>(p.n_classes)},
              p.w_out);
    t.add_f64("beta", {1}, {p.beta});
    return t;
}

GnnParams params_from_tnsr(const Tnsr& t) {
    GnnParams p;
    std::vector<double> dims = t.at("dims").as_f64();
    if (dims.size() != 4) throw std::runtime_error("params_from_tnsr: bad dims section");
    p.in_dim = static_cast<int>(dims[0]);
    p.hidden_dim = static_cast<int>(dims[1]);
    p.n_classes = static_cast<int>(dims[2]);
    p.n_layers = static_cast<int>(dims[3]);
    p.w0 = t.at("W0").as_f64();
    p.attn_w = t.at("w").as_f64();
    p.w_out = t.at("WL1").as_f64();
    p.beta = t.at("beta").as_f64().at(0);
    p.validate();
    return p;
}

} // namespace a2gnn
