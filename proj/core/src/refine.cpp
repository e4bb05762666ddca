#include "a2gnn/refine.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace a2gnn {

DenseProbMap upsample_probs(const ProbMap& o, int grid_width, int grid_height, int out_width,
                            int out_height) {
    if (o.rows != grid_width * grid_height)
        throw std::invalid_argument("upsample_probs: node count does not match grid");
    if (out_width < grid_width || out_height < grid_height)
        throw std::invalid_argument("upsample_probs: target smaller than grid");

    int nc = o.cols;
    DenseProbMap out(out_width, out_height, nc);
    double sy = out_height > 1 ? static_cast<double>(grid_height - 1) / (out_height - 1) : 0.0;
    double sx = out_width > 1 ? static_cast<double>(grid_width - 1) / (out_width - 1) : 0.0;

    for (int r = 0; r < out_height; ++r) {
        double fy = r * sy;
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, grid_height - 1);
        double wy = fy - y0;
        for (int c = 0; c < out_width; ++c) {
            double fx = c * sx;
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, grid_width - 1);
            double wx = fx - x0;

            const double* p00 = o.row(y0 * grid_width + x0);
            const double* p01 = o.row(y0 * grid_width + x1);
            const double* p10 = o.row(y1 * grid_width + x0);
            const double* p11 = o.row(y1 * grid_width + x1);
            double* dst = out.px(r, c);
            double sum = 0.0;
            for (int k = 0; k < nc; ++k) {
                double top = p00[k] + wx * (p01[k] - p00[k]);
                double bot = p10[k] + wx * (p11[k] - p10[k]);
                dst[k] = top + wy * (bot - top);
                sum += dst[k];
            }
            if (sum > 0.0)
                for (int k = 0; k < nc; ++k) dst[k] /= sum;
        }
    }
    return out;
}

void CrfConfig::validate() const {
    if (iterations < 0 || !(w1 >= 0.0) || !(w2 >= 0.0) || !(theta_alpha > 0.0) ||
        !(theta_beta > 0.0) || !(theta_gamma > 0.0))
        throw std::invalid_argument("CrfConfig: weights must be non-negative, bandwidths positive");
}

DenseProbMap crf_refine(const DenseProbMap& p, const ImageRgb& image, const CrfConfig& cfg) {
    cfg.validate();
    if (image.width != p.width || image.height != p.height)
        throw std::invalid_argument("crf_refine: image and probability dims differ");
    int n = p.width * p.height;
    if (n > 16384)
        throw std::invalid_argument(
            "crf_refine: image too large for the exact pairwise pass (max 16384 pixels); "
            "downscale the input");

    int nc = p.channels;
    std::vector<double> log_unary(static_cast<size_t>(n) * nc);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < nc; ++k)
            log_unary[static_cast<size_t>(i) * nc + k] =
                std::log(std::max(p.data[static_cast<size_t>(i) * nc + k], 1e-12));

    // Pairwise kernel, symmetric with an empty diagonal. Appearance uses
    // squared spatial and color distances; smoothness is spatial only.
    double inv_a = 1.0 / (2.0 * cfg.theta_alpha * cfg.theta_alpha);
    double inv_b = 1.0 / (2.0 * cfg.theta_beta * cfg.theta_beta);
    double inv_g = 1.0 / (2.0 * cfg.theta_gamma * cfg.theta_gamma);
    auto kernel_at = [&](int i, int j) {
        int ri = i / p.width, ci = i % p.width;
        int rj = j / p.width, cj = j % p.width;
        const uint8_t* rgb_i = image.data.data() + static_cast<size_t>(i) * 3;
        const uint8_t* rgb_j = image.data.data() + static_cast<size_t>(j) * 3;
        double d2 = static_cast<double>(ri - rj) * (ri - rj) +
                    static_cast<double>(ci - cj) * (ci - cj);
        double c2 = 0.0;
        for (int k = 0; k < 3; ++k) {
            double dc = static_cast<double>(rgb_i[k]) - rgb_j[k];
            c2 += dc * dc;
        }
        return cfg.w1 * std::exp(-d2 * inv_a - c2 * inv_b) + cfg.w2 * std::exp(-d2 * inv_g);
    };

    // The full matrix is kept only for moderate sizes (64 MB at 4096 pixels);
    // larger inputs recompute kernel values each iteration.
    bool materialize = n <= 4096;
    std::vector<float> kernel;
    if (materialize) {
        kernel.assign(static_cast<size_t>(n) * n, 0.0f);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                float v = static_cast<float>(kernel_at(i, j));
                kernel[static_cast<size_t>(i) * n + j] = v;
                kernel[static_cast<size_t>(j) * n + i] = v;
            }
        }
    }

    DenseProbMap q = p;
    std::vector<double> message(static_cast<size_t>(n) * nc);
    for (int it = 0; it < cfg.iterations; ++it) {
        // message(i,k) = sum_{j != i} kernel(i,j) * Q(j,k)
        std::fill(message.begin(), message.end(), 0.0);
        if (materialize) {
            for (int i = 0; i < n; ++i) {
                const float* krow = kernel.data() + static_cast<size_t>(i) * n;
                double* mi = message.data() + static_cast<size_t>(i) * nc;
                for (int j = 0; j < n; ++j) {
                    double w = krow[j];
                    if (w == 0.0) continue;
                    const double* qj = q.data.data() + static_cast<size_t>(j) * nc;
                    for (int k = 0; k < nc; ++k) mi[k] += w * qj[k];
                }
            }
        } else {
            for (int i = 0; i < n; ++i) {
                double* mi = message.data() + static_cast<size_t>(i) * nc;
                const double* qi = q.data.data() + static_cast<size_t>(i) * nc;
                for (int j = i + 1; j < n; ++j) {
                    double w = kernel_at(i, j);
                    const double* qj = q.data.data() + static_cast<size_t>(j) * nc;
                    double* mj = message.data() + static_cast<size_t>(j) * nc;
                    for (int k = 0; k < nc; ++k) {
                        mi[k] += w * qj[k];
                        mj[k] += w * qi[k];
                    }
                }
            }
        }
        // Potts compatibility penalizes disagreement: subtract the mass of
        // all other classes, then renormalize through a softmax.
        for (int i = 0; i < n; ++i) {
            const double* mi = message.data() + static_cast<size_t>(i) * nc;
            double total = 0.0;
            for (int k = 0; k < nc; ++k) total += mi[k];
            double* qi = q.data.data() + static_cast<size_t>(i) * nc;
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < nc; ++k) {
                qi[k] = log_unary[static_cast<size_t>(i) * nc + k] - (total - mi[k]);
                mx = std::max(mx, qi[k]);
            }
            double sum = 0.0;
            for (int k = 0; k < nc; ++k) {
                qi[k] = std::exp(qi[k] - mx);
                sum += qi[k];
            }
            for (int k = 0; k < nc; ++k) qi[k] /= sum;
        }
    }
    return q;
}

LabelMap to_labels(const DenseProbMap& p) {
    LabelMap out(p.width, p.height);
    for (int r = 0; r < p.height; ++r) {
        for (int c = 0; c < p.width; ++c) {
            const double* q = p.px(r, c);
            int best = 0;
            for (int k = 1; k < p.channels; ++k)
                if (q[k] > q[best]) best = k;
            out.at(r, c) = static_cast<uint8_t>(best);
        }
    }
    return out;
}

std::vector<InstanceMask> to_instances(const LabelMap& labels, const DenseProbMap& p,
                                       const BoxSet& boxes) {
    if (labels.width != p.width || labels.height != p.height)
        throw std::invalid_argument("to_instances: label/probability dims differ");

    // Owner per pixel among boxes sharing the pixel's class: smallest area,
    // then lowest index.
    std::vector<InstanceMask> out;
    out.reserve(boxes.size());
    for (size_t b = 0; b < boxes.size(); ++b) {
        InstanceMask m;
        m.box_index = static_cast<int>(b);
        m.cls = static_cast<uint8_t>(boxes.boxes[b].cls);
        m.width = labels.width;
        m.height = labels.height;
        m.mask.assign(labels.size(), 0);
        out.push_back(std::move(m));
    }

    for (int r = 0; r < labels.height; ++r) {
        for (int c = 0; c < labels.width; ++c) {
            uint8_t cls = labels.at(r, c);
            if (cls == LabelMap::kBackground || cls == LabelMap::kUnknown) continue;
            int owner = -1;
            long long owner_area = 0;
            for (size_t b = 0; b < boxes.size(); ++b) {
                const Box& box = boxes.boxes[b];
                if (box.cls != cls || !box.contains(r, c)) continue;
                if (owner < 0 || box.area() < owner_area) {
                    owner = static_cast<int>(b);
                    owner_area = box.area();
                }
            }
            if (owner >= 0) out[owner].mask[static_cast<size_t>(r) * labels.width + c] = 1;
        }
    }

    for (InstanceMask& m : out) {
        double sum = 0.0;
        size_t cnt = 0;
        for (size_t i = 0; i < m.mask.size(); ++i) {
            if (!m.mask[i]) continue;
            sum += p.data[i * p.channels + m.cls];
            ++cnt;
        }
        m.confidence = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
    }
    return out;
}

IouReport miou(const LabelMap& pred, const LabelMap& gt, int n_classes) {
    if (!pred.same_dims(gt)) throw std::invalid_argument("miou: dimension mismatch");
    std::vector<long long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    for (size_t i = 0; i < gt.size(); ++i) {
        uint8_t g = gt.data[i];
        if (g == LabelMap::kUnknown) continue;
        uint8_t q = pred.data[i];
        if (g >= n_classes || (q >= n_classes && q != LabelMap::kUnknown))
            throw std::invalid_argument("miou: label out of class range");
        if (q == g) {
            ++tp[g];
        } else {
            ++fn[g];
            if (q != LabelMap::kUnknown) ++fp[q];
        }
    }

    IouReport rep;
    rep.per_class.assign(n_classes, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < n_classes; ++c) {
        long long denom = tp[c] + fp[c] + fn[c];
        if (denom == 0) continue;
        rep.per_class[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
        sum += rep.per_class[c];
        ++defined;
    }
    rep.mean = defined > 0 ? sum / defined : 0.0;
    return rep;
}

} // namespace a2gnn
