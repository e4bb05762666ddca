#include "a2gnn/fixtures.hpp"

#include "a2gnn/config.hpp"
#include "a2gnn/label_map.hpp"
#include "a2gnn/pnm.hpp"
#include "a2gnn/rng.hpp"
#include "a2gnn/tnsr.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace a2gnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint8_t to_byte(double v) {
    double x = std::clamp(v, 0.0, 1.0) * 255.0 + 0.5;
    return static_cast<uint8_t>(std::clamp(x, 0.0, 255.0));
}

struct Rect {
    int x0, y0, x1, y1;
    bool intersects(const Rect& o, int margin) const {
        return !(x1 + margin <= o.x0 || o.x1 + margin <= x0 || y1 + margin <= o.y0 ||
                 o.y1 + margin <= y0);
    }
};

Rect sample_rect(Rng& rng, int width, int height) {
    int w = 9 + rng.uniform_int(5);  // 9..13
    int h = 9 + rng.uniform_int(5);
    int x0 = 1 + rng.uniform_int(width - w - 2);
    int y0 = 1 + rng.uniform_int(height - h - 2);
    return {x0, y0, x0 + w, y0 + h};
}

} // namespace

void generate_fixtures(const std::string& dir, const FixtureConfig& cfg) {
    for (const char* sub : {"images", "seeds", "scores", "boxes", "gt"})
        fs::create_directories(fs::path(dir) / sub);

    const std::array<std::array<double, 3>, 3> palette = {{
        {0.16, 0.22, 0.34}, // background
        {0.78, 0.30, 0.24}, // class 1
        {0.26, 0.70, 0.34}, // class 2
    }};
    constexpr int n_classes = 3;

    for (int img = 0; img < cfg.n_images; ++img) {
        Rng rng(mix_seed(cfg.seed, 0xf1c00ULL + static_cast<uint64_t>(img)));

        // Two disjoint rectangles, one per foreground class.
        Rect r1 = sample_rect(rng, cfg.width, cfg.height);
        Rect r2 = sample_rect(rng, cfg.width, cfg.height);
        for (int attempt = 0; attempt < 200 && r1.intersects(r2, 2); ++attempt)
            r2 = sample_rect(rng, cfg.width, cfg.height);
        if (r1.intersects(r2, 2)) {
            // Fall back to a fixed split that always fits.
            r1 = {2, 2, 12, 12};
            r2 = {cfg.width - 13, cfg.height - 13, cfg.width - 3, cfg.height - 3};
        }

        LabelMap gt(cfg.width, cfg.height, LabelMap::kBackground);
        for (int r = r1.y0; r < r1.y1; ++r)
            for (int c = r1.x0; c < r1.x1; ++c) gt.at(r, c) = 1;
        for (int r = r2.y0; r < r2.y1; ++r)
            for (int c = r2.x0; c < r2.x1; ++c) gt.at(r, c) = 2;

        ImageRgb image(cfg.width, cfg.height);
        for (int r = 0; r < cfg.height; ++r) {
            for (int c = 0; c < cfg.width; ++c) {
                const auto& base = palette[gt.at(r, c)];
                uint8_t* px = image.px(r, c);
                for (int k = 0; k < 3; ++k)
                    px[k] = to_byte(base[k] + rng.uniform(-0.03, 0.03));
            }
        }

        // Seed labels concentrate on one corner patch of each object (the
        // "discriminative part"); background seeds are spread uniformly.
        std::array<Rect, 2> patches;
        for (int obj = 0; obj < 2; ++obj) {
            const Rect& rect = obj == 0 ? r1 : r2;
            int pw = std::max(2, (rect.x1 - rect.x0) * 6 / 10);
            int ph = std::max(2, (rect.y1 - rect.y0) * 6 / 10);
            bool left = rng.uniform() < 0.5;
            bool top = rng.uniform() < 0.5;
            int x0 = left ? rect.x0 : rect.x1 - pw;
            int y0 = top ? rect.y0 : rect.y1 - ph;
            patches[obj] = {x0, y0, x0 + pw, y0 + ph};
        }

        double fg_in_patch = 0.75;
        double fg_off_patch = 0.03;
        // Solve the background rate so total coverage lands near the target.
        long long n_px = static_cast<long long>(cfg.width) * cfg.height;
        long long fg_px = (r1.x1 - r1.x0) * static_cast<long long>(r1.y1 - r1.y0) +
                          (r2.x1 - r2.x0) * static_cast<long long>(r2.y1 - r2.y0);
        long long patch_px = 0;
        for (const Rect& p : patches)
            patch_px += (p.x1 - p.x0) * static_cast<long long>(p.y1 - p.y0);
        double expected_fg = fg_in_patch * patch_px + fg_off_patch * (fg_px - patch_px);
        double bg_rate = (cfg.seed_coverage * n_px - expected_fg) / (n_px - fg_px);
        bg_rate = std::clamp(bg_rate, 0.02, 0.95);

        LabelMap seeds(cfg.width, cfg.height, LabelMap::kUnknown);
        ScoreMap scores(cfg.width, cfg.height, n_classes);
        for (int r = 0; r < cfg.height; ++r) {
            for (int c = 0; c < cfg.width; ++c) {
                for (int k = 0; k < n_classes; ++k) scores.at(k, r, c) = 0.25 * rng.uniform();
                uint8_t truth = gt.at(r, c);
                double rate = bg_rate;
                if (truth != LabelMap::kBackground) {
                    const Rect& patch = patches[truth - 1];
                    bool in_patch = r >= patch.y0 && r < patch.y1 && c >= patch.x0 && c < patch.x1;
                    rate = in_patch ? fg_in_patch : fg_off_patch;
                }
                if (rng.uniform() >= rate) continue;

                uint8_t label = truth;
                bool noisy = rng.uniform() < cfg.noise_rate;
                if (noisy) {
                    int other = rng.uniform_int(n_classes - 1);
                    if (other >= truth) ++other;
                    label = static_cast<uint8_t>(other);
                }
                seeds.at(r, c) = label;
                scores.at(label, r, c) = noisy ? 0.45 * rng.uniform() : 0.55 + 0.45 * rng.uniform();
            }
        }

        char name[32];
        std::snprintf(name, sizeof(name), "img%02d", img);
        std::string id(name);
        write_ppm(image, (fs::path(dir) / "images" / (id + ".ppm")).string());
        write_pgm(seeds, (fs::path(dir) / "seeds" / (id + ".pgm")).string());
        write_pgm(gt, (fs::path(dir) / "gt" / (id + ".pgm")).string());

        Tnsr score_t;
        std::vector<float> score_data(scores.data.begin(), scores.data.end());
        score_t.add_f32("scores",
                        {static_cast<uint64_t>(n_classes), static_cast<uint64_t>(cfg.height),
                         static_cast<uint64_t>(cfg.width)},
                        score_data);
        write_tnsr(score_t, (fs::path(dir) / "scores" / (id + ".tnsr")).string());

        json boxes = json::array();
        boxes.push_back({{"class", 1}, {"x0", r1.x0}, {"y0", r1.y0}, {"x1", r1.x1}, {"y1", r1.y1}});
        boxes.push_back({{"class", 2}, {"x0", r2.x0}, {"y0", r2.y0}, {"x1", r2.x1}, {"y1", r2.y1}});
        std::ofstream bf(fs::path(dir) / "boxes" / (id + ".json"));
        bf << boxes.dump(2) << "\n";
    }

    PipelineConfig pc;
    pc.n_classes = n_classes;
    pc.seed = cfg.seed;
    pc.save((fs::path(dir) / "config.json").string());
}

} // namespace a2gnn
