#include "a2gnn/affinity.hpp"

#include <cmath>
#include <stdexcept>

namespace a2gnn {

namespace {

constexpr double kLogClamp = 1e-12;

double l1_distance(const double* a, const double* b, int n) {
    double d = 0.0;
    for (int k = 0; k < n; ++k) d += std::abs(a[k] - b[k]);
    return d;
}

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace

double pair_affinity(const FeatureMap& f, int i, int j) {
    if (i < 0 || j < 0 || i >= f.n_pixels() || j >= f.n_pixels())
        throw std::invalid_argument("pair_affinity: index out of range");
    return std::exp(-l1_distance(f.px(i), f.px(j), f.channels) / f.channels);
}

double gaussian_bandwidth(double row_i, double col_i, double row_j, double col_j,
                          const std::array<double, 3>& rgb_i, const std::array<double, 3>& rgb_j,
                          double sigma_xy, double sigma_rgb) {
    double dr = row_i - row_j;
    double dc = col_i - col_j;
    if (dr == 0.0 && dc == 0.0) return 0.0;
    double pos = std::sqrt(dr * dr + dc * dc);
    double c0 = rgb_i[0] - rgb_j[0];
    double c1 = rgb_i[1] - rgb_j[1];
    double c2 = rgb_i[2] - rgb_j[2];
    double col = std::sqrt(c0 * c0 + c1 * c1 + c2 * c2);
    return std::exp(-pos / (2.0 * sigma_xy * sigma_xy) - col / (2.0 * sigma_rgb * sigma_rgb));
}

AffinityLoss affinity_class_loss(const FeatureMap& f, const PairLabelSet& pairs) {
    AffinityLoss out;
    out.grad.assign(f.data.size(), 0.0);

    size_t n_pos = 0, n_neg = 0;
    for (const PairLabel& p : pairs.pairs) (p.label ? n_pos : n_neg)++;
    if (n_pos == 0 && n_neg == 0) return out;

    int d = f.channels;
    double pos_loss = 0.0, neg_loss = 0.0;
    for (const PairLabel& p : pairs.pairs) {
        const double* fi = f.px(p.i);
        const double* fj = f.px(p.j);
        double dist = l1_distance(fi, fj, d);
        double aff = std::exp(-dist / d);
        if (p.label) {
            pos_loss -= std::log(std::max(aff, kLogClamp));
            if (aff <= kLogClamp) continue; // clamped: flat region, no gradient
            // d(-log aff)/dF(i)_k = sign(F(i)_k - F(j)_k) / d
            double scale = 1.0 / (static_cast<double>(n_pos) * d);
            for (int k = 0; k < d; ++k) {
                double s = sign(fi[k] - fj[k]) * scale;
                out.grad[static_cast<size_t>(p.i) * d + k] += s;
                out.grad[static_cast<size_t>(p.j) * d + k] -= s;
            }
        } else {
            double one_minus = 1.0 - aff;
            neg_loss -= std::log(std::max(one_minus, kLogClamp));
            if (one_minus <= kLogClamp) continue;
            // d(-log(1-aff))/dF(i)_k = -aff * sign(F(i)_k - F(j)_k) / (d * (1-aff))
            double scale = aff / (static_cast<double>(n_neg) * d * one_minus);
            for (int k = 0; k < d; ++k) {
                double s = -sign(fi[k] - fj[k]) * scale;
                out.grad[static_cast<size_t>(p.i) * d + k] += s;
                out.grad[static_cast<size_t>(p.j) * d + k] -= s;
            }
        }
    }
    out.loss = (n_pos ? pos_loss / n_pos : 0.0) + (n_neg ? neg_loss / n_neg : 0.0);
    return out;
}

AffinityLoss affinity_reg_loss(const FeatureMap& f, const std::vector<std::array<double, 3>>& colors,
                               double radius, double sigma_xy, double sigma_rgb) {
    if (!(radius > 0.0)) throw std::invalid_argument("affinity_reg_loss: radius must be positive");
    if (colors.size() != static_cast<size_t>(f.n_pixels()))
        throw std::invalid_argument("affinity_reg_loss: color count mismatch");

    AffinityLoss out;
    out.grad.assign(f.data.size(), 0.0);
    int d = f.channels;
    int R = static_cast<int>(std::floor(radius));
    double r2 = radius * radius;

    for (int r = 0; r < f.height; ++r) {
        for (int c = 0; c < f.width; ++c) {
            int i = r * f.width + c;
            for (int dr = 0; dr <= R; ++dr) {
                int rj = r + dr;
                if (rj >= f.height) break;
                int dc0 = (dr == 0) ? 1 : -R;
                for (int dc = dc0; dc <= R; ++dc) {
                    int cj = c + dc;
                    if (cj < 0 || cj >= f.width) continue;
                    if (static_cast<double>(dr) * dr + static_cast<double>(dc) * dc > r2) continue;
                    int j = rj * f.width + cj;
                    double g = gaussian_bandwidth(r, c, rj, cj, colors[i], colors[j],
                                                  sigma_xy, sigma_rgb);
                    if (g == 0.0) continue;
                    const double* fi = f.px(i);
                    const double* fj = f.px(j);
                    out.loss += g * l1_distance(fi, fj, d) / d;
                    double scale = g / d;
                    for (int k = 0; k < d; ++k) {
                        double s = sign(fi[k] - fj[k]) * scale;
                        out.grad[static_cast<size_t>(i) * d + k] += s;
                        out.grad[static_cast<size_t>(j) * d + k] -= s;
                    }
                }
            }
        }
    }
    return out;
}

} // namespace a2gnn
