#include "a2gnn/embedder.hpp"

#include "a2gnn/rng.hpp"
#include "a2gnn/tnsr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace a2gnn {

DescriptorGrid make_descriptors(int width, int height,
                                const std::vector<std::array<double, 3>>& colors) {
    if (colors.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("make_descriptors: color count mismatch");
    DescriptorGrid g(width, height, 5);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            int i = r * width + c;
            double* d = g.px(i);
            d[0] = colors[i][0];
            d[1] = colors[i][1];
            d[2] = colors[i][2];
            d[3] = height > 1 ? static_cast<double>(r) / (height - 1) : 0.0;
            d[4] = width > 1 ? static_cast<double>(c) / (width - 1) : 0.0;
        }
    }
    return g;
}

FeatureMap Embedder::apply(const DescriptorGrid& x) const {
    if (x.channels != in_dim) throw std::invalid_argument("Embedder: descriptor dim mismatch");
    FeatureMap out(x.width, x.height, out_dim);
    std::vector<double> h(hidden_dim);
    for (int p = 0; p < x.n_pixels(); ++p) {
        const double* in = x.px(p);
        for (int j = 0; j < hidden_dim; ++j) {
            double a = b1[j];
            const double* w = w1.data() + static_cast<size_t>(j) * in_dim;
            for (int k = 0; k < in_dim; ++k) a += w[k] * in[k];
            h[j] = a > 0.0 ? a : 0.0;
        }
        double* o = out.px(p);
        for (int j = 0; j < out_dim; ++j) {
            double a = b2[j];
            const double* w = w2.data() + static_cast<size_t>(j) * hidden_dim;
            for (int k = 0; k < hidden_dim; ++k) a += w[k] * h[k];
            o[j] = a > 0.0 ? a : 0.0;
        }
    }
    return out;
}

namespace {

struct Adam {
    std::vector<double> m, v;
    int t = 0;

    explicit Adam(size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& param, const std::vector<double>& grad, double lr,
              double b1, double b2, double eps) {
        ++t;
        double c1 = 1.0 - std::pow(b1, t);
        double c2 = 1.0 - std::pow(b2, t);
        for (size_t i = 0; i < param.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

Embedder init_embedder(int in_dim, const EmbedderConfig& cfg) {
    Embedder e;
    e.in_dim = in_dim;
    e.hidden_dim = cfg.hidden_dim;
    e.out_dim = cfg.out_dim;
    Rng rng(mix_seed(cfg.seed, 0x456d6264ULL));
    auto init = [&](std::vector<double>& w, size_t n, int fan_in) {
        double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        w.resize(n);
        for (double& x : w) x = rng.uniform(-s, s);
    };
    init(e.w1, static_cast<size_t>(e.hidden_dim) * in_dim, in_dim);
    init(e.b1, e.hidden_dim, in_dim);
    init(e.w2, static_cast<size_t>(e.out_dim) * e.hidden_dim, e.hidden_dim);
    init(e.b2, e.out_dim, e.hidden_dim);
    return e;
}

// Parameter gradient layout: w1, b1, w2, b2 concatenated.
size_t param_count(const Embedder& e) {
    return e.w1.size() + e.b1.size() + e.w2.size() + e.b2.size();
}

void gather_params(const Embedder& e, std::vector<double>& out) {
    size_t o = 0;
    for (const auto* blk : {&e.w1, &e.b1, &e.w2, &e.b2}) {
        std::copy(blk->begin(), blk->end(), out.begin() + o);
        o += blk->size();
    }
}

void scatter_params(Embedder& e, const std::vector<double>& in) {
    size_t o = 0;
    for (auto* blk : {&e.w1, &e.b1, &e.w2, &e.b2}) {
        std::copy(in.begin() + o, in.begin() + o + blk->size(), blk->begin());
        o += blk->size();
    }
}

// Unordered in-radius pair count of a grid; normalizes the smoothness term
// so lambda is independent of image size.
long long in_radius_pair_count(int width, int height, double radius) {
    int R = static_cast<int>(std::floor(radius));
    double r2 = radius * radius;
    long long count = 0;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            for (int dr = 0; dr <= R; ++dr) {
                if (r + dr >= height) break;
                int dc0 = (dr == 0) ? 1 : -R;
                for (int dc = dc0; dc <= R; ++dc) {
                    if (c + dc < 0 || c + dc >= width) continue;
                    if (static_cast<double>(dr) * dr + static_cast<double>(dc) * dc > r2) continue;
                    ++count;
                }
            }
    return count;
}

// Forward over one grid, loss evaluation and backward into `grad` (adds).
double accumulate_image(const Embedder& e, const DescriptorGrid& descriptors,
                        const PairLabelSet& pairs,
                        const std::vector<std::array<double, 3>>& colors,
                        const EmbedderConfig& cfg, double weight, std::vector<double>& grad) {
    int in_dim = e.in_dim;
    int n_px = descriptors.n_pixels();
    std::vector<double> hidden(static_cast<size_t>(n_px) * e.hidden_dim);

    FeatureMap f(descriptors.width, descriptors.height, e.out_dim);
    for (int p = 0; p < n_px; ++p) {
        const double* in = descriptors.px(p);
        double* h = hidden.data() + static_cast<size_t>(p) * e.hidden_dim;
        for (int j = 0; j < e.hidden_dim; ++j) {
            double a = e.b1[j];
            const double* w = e.w1.data() + static_cast<size_t>(j) * in_dim;
            for (int k = 0; k < in_dim; ++k) a += w[k] * in[k];
            h[j] = a > 0.0 ? a : 0.0;
        }
        double* o = f.px(p);
        for (int j = 0; j < e.out_dim; ++j) {
            double a = e.b2[j];
            const double* w = e.w2.data() + static_cast<size_t>(j) * e.hidden_dim;
            for (int k = 0; k < e.hidden_dim; ++k) a += w[k] * h[k];
            o[j] = a > 0.0 ? a : 0.0;
        }
    }

    AffinityLoss lc = affinity_class_loss(f, pairs);
    double loss = lc.loss;
    std::vector<double> df = std::move(lc.grad);
    if (cfg.lambda != 0.0) {
        AffinityLoss lr = affinity_reg_loss(f, colors, cfg.radius, cfg.sigma_xy, cfg.sigma_rgb);
        // The smoothness term is a raw sum over ~HW*r^2 pairs while the class
        // term is a per-pair mean; average it so lambda keeps the same meaning
        // at every image size.
        long long n_pairs =
            std::max<long long>(1, in_radius_pair_count(descriptors.width, descriptors.height,
                                                        cfg.radius));
        double s = cfg.lambda / static_cast<double>(n_pairs);
        loss += s * lr.loss;
        for (size_t i = 0; i < df.size(); ++i) df[i] += s * lr.grad[i];
    }

    size_t off_b1 = e.w1.size();
    size_t off_w2 = off_b1 + e.b1.size();
    size_t off_b2 = off_w2 + e.w2.size();
    std::vector<double> dh(e.hidden_dim);
    for (int p = 0; p < n_px; ++p) {
        const double* in = descriptors.px(p);
        const double* h = hidden.data() + static_cast<size_t>(p) * e.hidden_dim;
        const double* o = f.px(p);
        const double* dout = df.data() + static_cast<size_t>(p) * e.out_dim;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (int j = 0; j < e.out_dim; ++j) {
            if (o[j] <= 0.0) continue; // rectifier gate
            double g = dout[j] * weight;
            if (g == 0.0) continue;
            double* gw = grad.data() + off_w2 + static_cast<size_t>(j) * e.hidden_dim;
            const double* w = e.w2.data() + static_cast<size_t>(j) * e.hidden_dim;
            for (int k = 0; k < e.hidden_dim; ++k) {
                gw[k] += g * h[k];
                dh[k] += g * w[k];
            }
            grad[off_b2 + j] += g;
        }
        for (int j = 0; j < e.hidden_dim; ++j) {
            if (h[j] <= 0.0 || dh[j] == 0.0) continue;
            double g = dh[j];
            double* gw = grad.data() + static_cast<size_t>(j) * in_dim;
            for (int k = 0; k < in_dim; ++k) gw[k] += g * in[k];
            grad[off_b1 + j] += g;
        }
    }
    return loss;
}

std::vector<std::array<double, 3>> descriptor_colors(const DescriptorGrid& g) {
    std::vector<std::array<double, 3>> colors(g.n_pixels());
    for (int p = 0; p < g.n_pixels(); ++p) {
        const double* d = g.px(p);
        colors[p] = {d[0], d[1], d[2]};
    }
    return colors;
}

} // namespace

EmbedderResult train_embedder(const DescriptorGrid& descriptors, const PairLabelSet& pairs,
                              const EmbedderConfig& cfg) {
    return train_embedder_corpus({descriptors}, {pairs}, cfg);
}

EmbedderResult train_embedder_corpus(const std::vector<DescriptorGrid>& descriptors,
                                     const std::vector<PairLabelSet>& pairs,
                                     const EmbedderConfig& cfg) {
    if (descriptors.empty() || descriptors.size() != pairs.size())
        throw std::invalid_argument("train_embedder: descriptor/pair corpus mismatch");
    bool any_pairs = false;
    for (const PairLabelSet& p : pairs) any_pairs |= !p.empty();
    if (!any_pairs) throw std::invalid_argument("train_embedder: empty pair set");
    int in_dim = descriptors.front().channels;
    for (const DescriptorGrid& d : descriptors)
        if (d.channels != in_dim)
            throw std::invalid_argument("train_embedder: descriptor dims disagree");

    Embedder e = init_embedder(in_dim, cfg);
    std::vector<std::vector<std::array<double, 3>>> colors;
    colors.reserve(descriptors.size());
    for (const DescriptorGrid& d : descriptors) colors.push_back(descriptor_colors(d));

    size_t n_params = param_count(e);
    Adam opt(n_params);
    std::vector<double> grad(n_params);
    std::vector<double> params(n_params);
    double weight = 1.0 / static_cast<double>(descriptors.size());

    EmbedderResult result;
    result.loss_trace.reserve(cfg.iterations);
    for (int it = 0; it < cfg.iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (size_t img = 0; img < descriptors.size(); ++img)
            loss += weight *
                    accumulate_image(e, descriptors[img], pairs[img], colors[img], cfg, weight, grad);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_embedder: non-finite loss at iteration " +
                                     std::to_string(it));
        result.loss_trace.push_back(loss);

        gather_params(e, params);
        opt.step(params, grad, cfg.learning_rate, cfg.adam_b1, cfg.adam_b2, cfg.adam_eps);
        scatter_params(e, params);
    }

    result.embedder = std::move(e);
    return result;
}

Tnsr embedder_to_tnsr(const Embedder& e) {
    Tnsr t;
    t.add_f64("dims", {3},
              {static_cast<double>(e.in_dim), static_cast<double>(e.hidden_dim),
               static_cast<double>(e.out_dim)});
    t.add_f64("W1", {static_cast<uint64_t>(e.hidden_dim), static_cast<uint64_t>(e.in_dim)}, e.w1);
    t.add_f64("b1", {static_cast<uint64_t>(e.hidden_dim)}, e.b1);
    t.add_f64("W2", {static_cast<uint64_t>(e.out_dim), static_cast<uint64_t>(e.hidden_dim)}, e.w2);
    t.add_f64("b2", {static_cast<uint64_t>(e.out_dim)}, e.b2);
    return t;
}

Embedder embedder_from_tnsr(const Tnsr& t) {
    Embedder e;
    std::vector<double> dims = t.at("dims").as_f64();
    if (dims.size() != 3) throw std::runtime_error("embedder_from_tnsr: bad dims section");
    e.in_dim = static_cast<int>(dims[0]);
    e.hidden_dim = static_cast<int>(dims[1]);
    e.out_dim = static_cast<int>(dims[2]);
    e.w1 = t.at("W1").as_f64();
    e.b1 = t.at("b1").as_f64();
    e.w2 = t.at("W2").as_f64();
    e.b2 = t.at("b2").as_f64();
    if (e.w1.size() != static_cast<size_t>(e.hidden_dim) * e.in_dim ||
        e.w2.size() != static_cast<size_t>(e.out_dim) * e.hidden_dim ||
        e.b1.size() != static_cast<size_t>(e.hidden_dim) ||
        e.b2.size() != static_cast<size_t>(e.out_dim))
        throw std::runtime_error("embedder_from_tnsr: block size mismatch");
    return e;
}

} // namespace a2gnn
