#include "a2gnn/seeds.hpp"

#include "a2gnn/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace a2gnn {

namespace {

void require_same_dims(const LabelMap& a, const LabelMap& b, const char* what) {
    if (!a.same_dims(b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

} // namespace

std::vector<size_t> box_application_order(const BoxSet& boxes) {
    std::vector<size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return boxes.boxes[a].area() > boxes.boxes[b].area();
    });
    return order;
}

std::vector<int> governing_box(const BoxSet& boxes, int width, int height) {
    std::vector<int> owner(static_cast<size_t>(width) * height, -1);
    for (size_t idx : box_application_order(boxes)) {
        const Box& b = boxes.boxes[idx];
        for (int r = b.y0; r < b.y1; ++r)
            for (int c = b.x0; c < b.x1; ++c)
                owner[static_cast<size_t>(r) * width + c] = static_cast<int>(idx);
    }
    return owner;
}

LabelMap assemble_box_seeds(const std::vector<LabelMap>& per_box_masks, const BoxSet& boxes,
                            int width, int height) {
    if (per_box_masks.size() != boxes.size())
        throw std::invalid_argument("assemble_box_seeds: fragment/box count mismatch");
    boxes.validate(width, height);
    for (size_t k = 0; k < boxes.size(); ++k) {
        const Box& b = boxes.boxes[k];
        const LabelMap& frag = per_box_masks[k];
        if (frag.width != b.width() || frag.height != b.height())
            throw std::invalid_argument("assemble_box_seeds: fragment/box shape mismatch");
        for (uint8_t v : frag.data)
            if (v != LabelMap::kUnknown && v != b.cls)
                throw std::invalid_argument("assemble_box_seeds: fragment value not in {box class, unknown}");
    }

    LabelMap out(width, height, LabelMap::kBackground);
    for (size_t idx : box_application_order(boxes)) {
        const Box& b = boxes.boxes[idx];
        const LabelMap& frag = per_box_masks[idx];
        for (int r = b.y0; r < b.y1; ++r)
            for (int c = b.x0; c < b.x1; ++c)
                out.at(r, c) = frag.at(r - b.y0, c - b.x0);
    }
    return out;
}

LabelMap fuse_seeds(const LabelMap& m_i, const ScoreMap& score, const LabelMap& m_b,
                    const BoxSet& boxes) {
    require_same_dims(m_i, m_b, "fuse_seeds");
    if (score.width != m_i.width || score.height != m_i.height)
        throw std::invalid_argument("fuse_seeds: score map dimension mismatch");
    boxes.validate(m_i.width, m_i.height);

    // Does the image-level map predict the box's own class anywhere inside it?
    std::vector<char> class_seen(boxes.size(), 0);
    for (size_t k = 0; k < boxes.size(); ++k) {
        const Box& b = boxes.boxes[k];
        for (int r = b.y0; r < b.y1 && !class_seen[k]; ++r)
            for (int c = b.x0; c < b.x1; ++c)
                if (m_i.at(r, c) == b.cls) {
                    class_seen[k] = 1;
                    break;
                }
    }

    std::vector<int> owner = governing_box(boxes, m_i.width, m_i.height);
    LabelMap out(m_i.width, m_i.height);
    for (int r = 0; r < m_i.height; ++r) {
        for (int c = 0; c < m_i.width; ++c) {
            size_t p = static_cast<size_t>(r) * m_i.width + c;
            int g = owner[p];
            if (g < 0) {
                out.data[p] = m_b.data[p];
            } else if (m_b.data[p] == m_i.data[p]) {
                out.data[p] = m_i.data[p];
            } else if (!class_seen[static_cast<size_t>(g)]) {
                // Governing box's class is absent from the image-level map
                // inside that box; trust the box seed.
                out.data[p] = m_b.data[p];
            } else {
                out.data[p] = LabelMap::kUnknown;
            }
        }
    }
    return out;
}

LabelMap confident_image_seeds(const LabelMap& m_i, const ScoreMap& score, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw std::invalid_argument("confident_image_seeds: ratio must be in (0,1]");
    if (score.width != m_i.width || score.height != m_i.height)
        throw std::invalid_argument("confident_image_seeds: score map dimension mismatch");

    // Per-class score samples over pixels carrying that class.
    std::vector<std::vector<double>> samples(256);
    for (int r = 0; r < m_i.height; ++r) {
        for (int c = 0; c < m_i.width; ++c) {
            uint8_t cls = m_i.at(r, c);
            if (cls == LabelMap::kUnknown) continue;
            if (cls >= score.channels)
                throw std::invalid_argument("confident_image_seeds: label exceeds score channels");
            double s = score.at(cls, r, c);
            if (!std::isfinite(s))
                throw std::invalid_argument("confident_image_seeds: non-finite score");
            samples[cls].push_back(s);
        }
    }

    // Keep the k-th largest score per class as the cut, k = floor(ratio * n),
    // at least one pixel per class. Ties at the cut all survive.
    std::vector<double> cut(256, 0.0);
    std::vector<char> has_cut(256, 0);
    for (int cls = 0; cls < 256; ++cls) {
        auto& s = samples[cls];
        if (s.empty()) continue;
        size_t keep = std::max<size_t>(1, static_cast<size_t>(ratio * static_cast<double>(s.size())));
        keep = std::min(keep, s.size());
        std::nth_element(s.begin(), s.begin() + (keep - 1), s.end(), std::greater<double>());
        cut[cls] = s[keep - 1];
        has_cut[cls] = 1;
    }

    LabelMap out(m_i.width, m_i.height);
    for (int r = 0; r < m_i.height; ++r) {
        for (int c = 0; c < m_i.width; ++c) {
            uint8_t cls = m_i.at(r, c);
            if (cls == LabelMap::kUnknown || !has_cut[cls]) continue;
            if (score.at(cls, r, c) >= cut[cls]) out.at(r, c) = cls;
        }
    }
    return out;
}

LabelMap select_confident(const LabelMap& m_f, const LabelMap& m_b, const LabelMap& m_i,
                          const ScoreMap& score, double ratio) {
    require_same_dims(m_f, m_b, "select_confident");
    require_same_dims(m_f, m_i, "select_confident");
    LabelMap mp = confident_image_seeds(m_i, score, ratio);

    LabelMap out(m_f.width, m_f.height);
    for (size_t p = 0; p < m_f.size(); ++p) {
        if (m_f.data[p] == m_b.data[p] || m_f.data[p] == mp.data[p])
            out.data[p] = m_f.data[p];
        else
            out.data[p] = LabelMap::kUnknown;
    }
    return out;
}

LabelMap downsample(const LabelMap& m, int stride) {
    if (stride < 1) throw std::invalid_argument("downsample: stride must be >= 1");
    int gh = (m.height + stride - 1) / stride;
    int gw = (m.width + stride - 1) / stride;
    LabelMap out(gw, gh);
    for (int r = 0; r < gh; ++r) {
        int sr = std::min(m.height - 1, r * stride + stride / 2);
        for (int c = 0; c < gw; ++c) {
            int sc = std::min(m.width - 1, c * stride + stride / 2);
            out.at(r, c) = m.at(sr, sc);
        }
    }
    return out;
}

PairLabelSet affinity_pairs(const LabelMap& m, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("affinity_pairs: radius must be positive");
    PairLabelSet set;
    int R = static_cast<int>(std::floor(radius));
    double r2 = radius * radius;
    for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
            uint8_t li = m.at(r, c);
            if (li == LabelMap::kUnknown) continue;
            int i = r * m.width + c;
            for (int dr = 0; dr <= R; ++dr) {
                int r2nd = r + dr;
                if (r2nd >= m.height) break;
                int dc0 = (dr == 0) ? 1 : -R;
                for (int dc = dc0; dc <= R; ++dc) {
                    int c2nd = c + dc;
                    if (c2nd < 0 || c2nd >= m.width) continue;
                    if (static_cast<double>(dr) * dr + static_cast<double>(dc) * dc > r2) continue;
                    uint8_t lj = m.at(r2nd, c2nd);
                    if (lj == LabelMap::kUnknown) continue;
                    set.pairs.push_back({i, r2nd * m.width + c2nd, static_cast<uint8_t>(li == lj ? 1 : 0)});
                }
            }
        }
    }
    return set;
}

BoxSet scale_boxes_to_grid(const BoxSet& boxes, int stride, int grid_width, int grid_height) {
    if (stride < 1) throw std::invalid_argument("scale_boxes_to_grid: stride must be >= 1");
    BoxSet out;
    for (const Box& b : boxes.boxes) {
        Box s;
        s.cls = b.cls;
        s.x0 = std::clamp(b.x0 / stride, 0, grid_width);
        s.y0 = std::clamp(b.y0 / stride, 0, grid_height);
        s.x1 = std::clamp((b.x1 + stride - 1) / stride, 0, grid_width);
        s.y1 = std::clamp((b.y1 + stride - 1) / stride, 0, grid_height);
        if (s.empty()) {
            log_info("scale_boxes_to_grid: dropping box that collapses to empty range");
            continue;
        }
        out.boxes.push_back(s);
    }
    return out;
}

} // namespace a2gnn
