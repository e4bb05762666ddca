#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2gnn {

// Per-pixel class ids with 255 as the "unknown" sentinel. Class 0 is
// background everywhere in this project.
struct LabelMap {
    static constexpr uint8_t kUnknown = 255;
    static constexpr uint8_t kBackground = 0;

    int width = 0;
    int height = 0;
    std::vector<uint8_t> data; // row-major

    LabelMap() = default;
    LabelMap(int w, int h, uint8_t fill = kUnknown)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("LabelMap: dimensions must be positive");
    }

    uint8_t at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    uint8_t& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return data.size(); }
    bool same_dims(const LabelMap& o) const { return width == o.width && height == o.height; }
};

// Per-pixel per-class confidence, channel-major layout (c, r, col).
struct ScoreMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    ScoreMap() = default;
    ScoreMap(int w, int h, int c)
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0.0) {}

    double at(int ch, int r, int c) const {
        return data[(static_cast<size_t>(ch) * height + r) * width + c];
    }
    double& at(int ch, int r, int c) {
        return data[(static_cast<size_t>(ch) * height + r) * width + c];
    }
};

// Axis-aligned box with half-open pixel ranges [x0,x1) x [y0,y1).
struct Box {
    int cls = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    long long area() const {
        return static_cast<long long>(x1 - x0) * static_cast<long long>(y1 - y0);
    }
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(int r, int c) const { return r >= y0 && r < y1 && c >= x0 && c < x1; }
    bool empty() const { return x0 >= x1 || y0 >= y1; }
};

struct BoxSet {
    std::vector<Box> boxes;

    size_t size() const { return boxes.size(); }
    bool empty() const { return boxes.empty(); }

    // Structural checks against an image extent and class count. Box classes
    // are foreground only (never 0, never the unknown sentinel).
    void validate(int image_width, int image_height, int n_classes = 255) const {
        for (const Box& b : boxes) {
            if (b.cls <= 0 || b.cls >= n_classes || b.cls >= 255)
                throw std::invalid_argument("BoxSet: class id out of range: " + std::to_string(b.cls));
            if (!(b.x0 < b.x1 && b.x1 <= image_width && b.y0 < b.y1 && b.y1 <= image_height) ||
                b.x0 < 0 || b.y0 < 0)
                throw std::invalid_argument("BoxSet: box out of bounds");
        }
    }
};

// Class-agnostic affinity supervision: unordered node pairs (i < j) with a
// binary same-class label.
struct PairLabel {
    int i = 0;
    int j = 0;
    uint8_t label = 0; // 1 = same class, 0 = different
};

struct PairLabelSet {
    std::vector<PairLabel> pairs;
    size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

// 8-bit RGB image, interleaved row-major.
struct ImageRgb {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data; // 3 bytes per pixel

    ImageRgb() = default;
    ImageRgb(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0) {}

    const uint8_t* px(int r, int c) const {
        return data.data() + (static_cast<size_t>(r) * width + c) * 3;
    }
    uint8_t* px(int r, int c) { return data.data() + (static_cast<size_t>(r) * width + c) * 3; }

    std::array<double, 3> unit_rgb(int r, int c) const {
        const uint8_t* p = px(r, c);
        return {p[0] / 255.0, p[1] / 255.0, p[2] / 255.0};
    }
};

} // namespace a2gnn
