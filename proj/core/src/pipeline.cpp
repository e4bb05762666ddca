#include "a2gnn/pipeline.hpp"

#include "a2gnn/embedder.hpp"
#include "a2gnn/gnn.hpp"
#include "a2gnn/graph.hpp"
#include "a2gnn/log.hpp"
#include "a2gnn/losses.hpp"
#include "a2gnn/pnm.hpp"
#include "a2gnn/refine.hpp"
#include "a2gnn/rng.hpp"
#include "a2gnn/seeds.hpp"
#include "a2gnn/tnsr.hpp"
#include "a2gnn/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace a2gnn {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> list_image_ids(const std::string& dataset_dir) {
    fs::path dir = fs::path(dataset_dir) / "images";
    if (!fs::is_directory(dir))
        throw std::runtime_error("dataset: missing images/ under " + dataset_dir);
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
        ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw std::runtime_error("dataset: no .ppm images in " + dir.string());
    return ids;
}

BoxSet read_boxes_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("boxes: cannot open " + path);
    json j = json::parse(in);
    if (!j.is_array()) throw std::runtime_error("boxes: " + path + ": expected a JSON array");
    BoxSet out;
    for (const json& e : j) {
        Box b;
        b.cls = e.at("class").get<int>();
        b.x0 = e.at("x0").get<int>();
        b.y0 = e.at("y0").get<int>();
        b.x1 = e.at("x1").get<int>();
        b.y1 = e.at("y1").get<int>();
        out.boxes.push_back(b);
    }
    return out;
}

void write_boxes_json(const BoxSet& boxes, const std::string& path) {
    json j = json::array();
    for (const Box& b : boxes.boxes)
        j.push_back({{"class", b.cls}, {"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("boxes: cannot write " + path);
    out << j.dump(2) << "\n";
}

ScoreMap read_scores(const std::string& path) {
    Tnsr t = read_tnsr(path);
    const TnsrSection& s = t.at("scores");
    if (s.dims.size() != 3) throw std::runtime_error("scores: " + path + ": expected 3 dims");
    ScoreMap m(static_cast<int>(s.dims[2]), static_cast<int>(s.dims[1]),
               static_cast<int>(s.dims[0]));
    m.data = s.as_f64();
    return m;
}

std::vector<std::array<double, 3>> node_colors(const ImageRgb& img, int stride, int& grid_width,
                                               int& grid_height) {
    grid_height = (img.height + stride - 1) / stride;
    grid_width = (img.width + stride - 1) / stride;
    std::vector<std::array<double, 3>> out(static_cast<size_t>(grid_width) * grid_height);
    for (int gr = 0; gr < grid_height; ++gr) {
        for (int gc = 0; gc < grid_width; ++gc) {
            int r0 = gr * stride, r1 = std::min(img.height, r0 + stride);
            int c0 = gc * stride, c1 = std::min(img.width, c0 + stride);
            double acc[3] = {0, 0, 0};
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) {
                    const uint8_t* p = img.px(r, c);
                    for (int k = 0; k < 3; ++k) acc[k] += p[k] / 255.0;
                }
            double inv = 1.0 / ((r1 - r0) * (c1 - c0));
            out[static_cast<size_t>(gr) * grid_width + gc] = {acc[0] * inv, acc[1] * inv,
                                                              acc[2] * inv};
        }
    }
    return out;
}

namespace {

// ---------------------------------------------------------------------------
// Stage caching: a stage is skipped when its key (hash of inputs + the config
// subset it depends on) matches the recorded one and the outputs exist.

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t hash_str(const std::string& s, uint64_t h) { return fnv1a(s.data(), s.size(), h); }

uint64_t hash_file(const fs::path& path, uint64_t h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cache: cannot read " + path.string());
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
    }
    return h;
}

class StageCache {
public:
    StageCache(const fs::path& stage_dir, const std::string& config_subset)
        : dir_(stage_dir), key_(0xcbf29ce484222325ULL) {
        key_ = hash_str(config_subset, key_);
    }

    void add_input(const fs::path& file) {
        key_ = hash_str(file.filename().string(), key_);
        key_ = hash_file(file, key_);
    }
    void add_tag(const std::string& tag) { key_ = hash_str(tag, key_); }
    void expect_output(const fs::path& file) { outputs_.push_back(file); }

    bool fresh(bool force) const {
        if (force) return false;
        std::ifstream in(dir_ / ".cachekey");
        std::string recorded;
        if (!(in >> recorded)) return false;
        if (recorded != key_hex()) return false;
        for (const fs::path& f : outputs_)
            if (!fs::exists(f)) return false;
        return true;
    }

    void commit() const {
        std::ofstream out(dir_ / ".cachekey", std::ios::binary);
        out << key_hex() << "\n";
    }

private:
    std::string key_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(key_));
        return buf;
    }

    fs::path dir_;
    uint64_t key_;
    std::vector<fs::path> outputs_;
};

// Runs fn over ids with up to `jobs` worker threads. Outputs are per-image
// files, so scheduling order cannot change results. The first exception wins
// and is rethrown after all workers finish.
void for_each_id(const std::vector<std::string>& ids, int jobs,
                 const std::function<void(const std::string&)>& fn) {
    if (jobs <= 1 || ids.size() <= 1) {
        for (const std::string& id : ids) fn(id);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= ids.size()) return;
            try {
                fn(ids[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    int n_threads = std::min<int>(jobs, static_cast<int>(ids.size()));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

fs::path dataset_file(const std::string& dataset_dir, const char* sub, const std::string& id,
                      const char* ext) {
    return fs::path(dataset_dir) / sub / (id + ext);
}

void require_file(const fs::path& p, const std::string& id) {
    if (!fs::exists(p))
        throw std::runtime_error("image " + id + ": missing input " + p.string());
}

std::string subset_json(std::initializer_list<std::pair<const char*, json>> kv) {
    json j;
    for (const auto& [k, v] : kv) j[k] = v;
    return j.dump();
}

// Per-box mask fragments: dataset/boxmasks/<id>_<k>.pgm when present,
// otherwise the whole box is treated as object.
std::vector<LabelMap> load_fragments(const std::string& dataset_dir, const std::string& id,
                                     const BoxSet& boxes) {
    std::vector<LabelMap> frags;
    frags.reserve(boxes.size());
    for (size_t k = 0; k < boxes.size(); ++k) {
        const Box& b = boxes.boxes[k];
        fs::path p = fs::path(dataset_dir) / "boxmasks" / (id + "_" + std::to_string(k) + ".pgm");
        if (fs::exists(p)) {
            frags.push_back(read_pgm(p.string()));
        } else {
            frags.emplace_back(b.width(), b.height(), static_cast<uint8_t>(b.cls));
        }
    }
    return frags;
}

Mat probmap_from_tnsr(const Tnsr& t, int& grid_width, int& grid_height) {
    const TnsrSection& s = t.at("O");
    if (s.dims.size() != 2) throw std::runtime_error("probs: expected 2 dims");
    Mat o(static_cast<int>(s.dims[0]), static_cast<int>(s.dims[1]));
    o.v = s.as_f64();
    std::vector<double> grid = t.at("grid").as_f64();
    grid_width = static_cast<int>(grid[0]);
    grid_height = static_cast<int>(grid[1]);
    return o;
}

struct GnnInputs {
    std::vector<TrainItem> corpus;
};

GnnInputs load_gnn_inputs(const std::string& dataset_dir, const std::string& out_dir,
                          const PipelineConfig& cfg, const std::vector<std::string>& ids) {
    GnnInputs in;
    for (const std::string& id : ids) {
        TrainItem item;
        item.id = id;
        fs::path gpath = fs::path(out_dir) / "graphs" / (id + "_graph.tnsr");
        require_file(gpath, id);
        item.graph = graph_from_tnsr(read_tnsr(gpath.string()));

        fs::path lpath = fs::path(out_dir) / "seeds" / (id + "_mg.pgm");
        require_file(lpath, id);
        LabelMap mg = read_pgm(lpath.string());
        item.labels = downsample(mg, cfg.stride);
        if (item.labels.width != item.graph.grid_width ||
            item.labels.height != item.graph.grid_height)
            throw std::runtime_error("image " + id + ": label grid does not match graph grid");

        BoxSet boxes = read_boxes_json(dataset_file(dataset_dir, "boxes", id, ".json").string());
        item.boxes = scale_boxes_to_grid(boxes, cfg.stride, item.graph.grid_width,
                                         item.graph.grid_height);
        in.corpus.push_back(std::move(item));
    }
    return in;
}

} // namespace

int stage_seeds(const std::string& dataset_dir, const std::string& out_dir,
                const PipelineConfig& cfg, const RunOptions& opts) {
    std::vector<std::string> ids = list_image_ids(dataset_dir);
    fs::path stage_dir = fs::path(out_dir) / "seeds";
    fs::create_directories(stage_dir);

    StageCache cache(stage_dir, subset_json({{"stage", "seeds"},
                                             {"ratio", cfg.ratio},
                                             {"n_classes", cfg.n_classes}}));
    for (const std::string& id : ids) {
        cache.add_tag(id);
        for (const char* sub : {"seeds", "scores", "boxes"}) {
            const char* ext = std::string(sub) == "scores" ? ".tnsr"
                              : std::string(sub) == "boxes" ? ".json"
                                                            : ".pgm";
            fs::path p = fs::path(dataset_dir) / sub / (id + ext);
            if (fs::exists(p)) cache.add_input(p);
        }
        fs::path maskdir = fs::path(dataset_dir) / "boxmasks";
        if (fs::is_directory(maskdir)) {
            for (int k = 0;; ++k) {
                fs::path p = maskdir / (id + "_" + std::to_string(k) + ".pgm");
                if (!fs::exists(p)) break;
                cache.add_input(p);
            }
        }
        cache.expect_output(stage_dir / (id + "_mf.pgm"));
        cache.expect_output(stage_dir / (id + "_mg.pgm"));
    }
    if (cache.fresh(opts.force)) {
        log_info("seeds: cached outputs are fresh, skipping");
        return 0;
    }

    std::atomic<int> failures{0};
    for_each_id(ids, opts.jobs, [&](const std::string& id) {
        try {
            fs::path mi_path = dataset_file(dataset_dir, "seeds", id, ".pgm");
            fs::path sc_path = dataset_file(dataset_dir, "scores", id, ".tnsr");
            fs::path bx_path = dataset_file(dataset_dir, "boxes", id, ".json");
            require_file(mi_path, id);
            require_file(sc_path, id);
            require_file(bx_path, id);

            LabelMap m_i = read_pgm(mi_path.string());
            ScoreMap score = read_scores(sc_path.string());
            BoxSet boxes = read_boxes_json(bx_path.string());
            boxes.validate(m_i.width, m_i.height, cfg.n_classes);

            std::vector<LabelMap> frags = load_fragments(dataset_dir, id, boxes);
            LabelMap m_b = assemble_box_seeds(frags, boxes, m_i.width, m_i.height);
            LabelMap m_f = fuse_seeds(m_i, score, m_b, boxes);
            LabelMap m_g = select_confident(m_f, m_b, m_i, score, cfg.ratio);

            write_pgm(m_f, (stage_dir / (id + "_mf.pgm")).string());
            write_pgm(m_g, (stage_dir / (id + "_mg.pgm")).string());
        } catch (const std::exception& e) {
            log_error("seeds: image " + id + ": " + e.what());
            failures.fetch_add(1);
        }
    });
    if (failures.load() == 0) cache.commit();
    return failures.load();
}

void stage_train_affinity(const std::string& dataset_dir, const std::string& out_dir,
                          const PipelineConfig& cfg, const RunOptions& opts) {
    std::vector<std::string> ids = list_image_ids(dataset_dir);
    fs::path stage_dir = fs::path(out_dir) / "affinity";
    fs::create_directories(stage_dir);

    StageCache cache(stage_dir, subset_json({{"stage", "train-affinity"},
                                             {"stride", cfg.stride},
                                             {"radius", cfg.radius},
                                             {"lambda", cfg.lambda},
                                             {"sigma_xy", cfg.sigma_xy},
                                             {"sigma_rgb", cfg.sigma_rgb},
                                             {"embed_hidden", cfg.embed_hidden},
                                             {"embed_dim", cfg.embed_dim},
                                             {"embed_iterations", cfg.embed_iterations},
                                             {"embed_learning_rate", cfg.embed_learning_rate},
                                             {"adam", {cfg.adam_b1, cfg.adam_b2, cfg.adam_eps}},
                                             {"seed", cfg.seed}}));
    for (const std::string& id : ids) {
        cache.add_input(dataset_file(dataset_dir, "images", id, ".ppm"));
        cache.add_input(fs::path(out_dir) / "seeds" / (id + "_mg.pgm"));
    }
    cache.expect_output(stage_dir / "embedder.tnsr");
    if (cache.fresh(opts.force)) {
        log_info("train-affinity: cached outputs are fresh, skipping");
        return;
    }

    // One embedder is trained over the whole corpus: the propagation model
    // shares parameters across images, so node features must live in a single
    // space.
    std::vector<DescriptorGrid> descriptors;
    std::vector<PairLabelSet> pairs;
    for (const std::string& id : ids) {
        try {
            ImageRgb image = read_ppm(dataset_file(dataset_dir, "images", id, ".ppm").string());
            LabelMap m_g = read_pgm((fs::path(out_dir) / "seeds" / (id + "_mg.pgm")).string());

            int gw = 0, gh = 0;
            auto colors = node_colors(image, cfg.stride, gw, gh);
            LabelMap grid_labels = downsample(m_g, cfg.stride);
            descriptors.push_back(make_descriptors(gw, gh, colors));
            pairs.push_back(affinity_pairs(grid_labels, cfg.radius));
        } catch (const std::exception& e) {
            throw std::runtime_error("image " + id + ": " + e.what());
        }
    }
    EmbedderResult res = train_embedder_corpus(descriptors, pairs, cfg.embedder_config(cfg.seed));
    write_tnsr(embedder_to_tnsr(res.embedder), (stage_dir / "embedder.tnsr").string());
    log_debug("train-affinity: final loss " + std::to_string(res.loss_trace.back()));
    cache.commit();
}

void stage_build_graph(const std::string& dataset_dir, const std::string& out_dir,
                       const PipelineConfig& cfg, const RunOptions& opts) {
    std::vector<std::string> ids = list_image_ids(dataset_dir);
    fs::path stage_dir = fs::path(out_dir) / "graphs";
    fs::create_directories(stage_dir);

    StageCache cache(stage_dir, subset_json({{"stage", "build-graph"},
                                             {"stride", cfg.stride},
                                             {"radius", cfg.radius},
                                             {"sigma_edge", cfg.sigma_edge},
                                             {"global_edges", cfg.global_edges}}));
    cache.add_input(fs::path(out_dir) / "affinity" / "embedder.tnsr");
    for (const std::string& id : ids) {
        cache.add_input(dataset_file(dataset_dir, "images", id, ".ppm"));
        cache.expect_output(stage_dir / (id + "_graph.tnsr"));
        cache.expect_output(stage_dir / (id + "_edges.txt"));
    }
    if (cache.fresh(opts.force)) {
        log_info("build-graph: cached outputs are fresh, skipping");
        return;
    }

    Embedder emb =
        embedder_from_tnsr(read_tnsr((fs::path(out_dir) / "affinity" / "embedder.tnsr").string()));
    for_each_id(ids, opts.jobs, [&](const std::string& id) {
        try {
            ImageRgb image = read_ppm(dataset_file(dataset_dir, "images", id, ".ppm").string());
            int gw = 0, gh = 0;
            auto colors = node_colors(image, cfg.stride, gw, gh);
            DescriptorGrid desc = make_descriptors(gw, gh, colors);
            FeatureMap features = emb.apply(desc);
            PixelGraph graph =
                build_graph(features, colors, cfg.radius, cfg.sigma_edge, cfg.global_edges);
            write_tnsr(graph_to_tnsr(graph), (stage_dir / (id + "_graph.tnsr")).string());
            write_edge_list_file(graph, (stage_dir / (id + "_edges.txt")).string());
        } catch (const std::exception& e) {
            throw std::runtime_error("image " + id + ": " + e.what());
        }
    });
    cache.commit();
}

void stage_train_gnn(const std::string& dataset_dir, const std::string& out_dir,
                     const PipelineConfig& cfg, const RunOptions& opts) {
    std::vector<std::string> ids = list_image_ids(dataset_dir);
    fs::path stage_dir = fs::path(out_dir) / "gnn";
    fs::create_directories(stage_dir);

    TrainConfig tcfg = cfg.train_config();
    if (opts.stage1_only) tcfg.stage_split = tcfg.epochs;

    StageCache cache(stage_dir, subset_json({{"stage", "train-gnn"},
                                             {"stride", cfg.stride},
                                             {"epochs", tcfg.epochs},
                                             {"stage_split", tcfg.stage_split},
                                             {"learning_rate", tcfg.learning_rate},
                                             {"weight_decay", tcfg.weight_decay},
                                             {"dropout", tcfg.dropout},
                                             {"lambda1", tcfg.lambda1},
                                             {"beta", tcfg.beta},
                                             {"tau_cc", tcfg.tau_cc},
                                             {"use_mp", tcfg.use_mp},
                                             {"use_reg", tcfg.use_reg},
                                             {"use_cc", tcfg.use_cc},
                                             {"strict_eq28", tcfg.strict_eq28},
                                             {"hidden_dim", tcfg.hidden_dim},
                                             {"n_layers", tcfg.n_layers},
                                             {"n_classes", tcfg.n_classes},
                                             {"sigma_xy", tcfg.sigma_xy},
                                             {"sigma_rgb", tcfg.sigma_rgb},
                                             {"adam", {cfg.adam_b1, cfg.adam_b2, cfg.adam_eps}},
                                             {"seed", cfg.seed}}));
    for (const std::string& id : ids) {
        cache.add_input(fs::path(out_dir) / "graphs" / (id + "_graph.tnsr"));
        cache.add_input(fs::path(out_dir) / "seeds" / (id + "_mg.pgm"));
        cache.add_input(dataset_file(dataset_dir, "boxes", id, ".json"));
    }
    cache.expect_output(stage_dir / "params.tnsr");
    cache.expect_output(stage_dir / "train.jsonl");
    if (cache.fresh(opts.force)) {
        log_info("train-gnn: cached outputs are fresh, skipping");
        return;
    }

    GnnInputs in = load_gnn_inputs(dataset_dir, out_dir, cfg, ids);
    TrainResult result = train(in.corpus, tcfg);

    write_tnsr(params_to_tnsr(result.params), (stage_dir / "params.tnsr").string());
    std::ofstream log_out(stage_dir / "train.jsonl", std::ios::binary);
    for (const EpochLog& e : result.log) {
        json line = {{"epoch", e.epoch},   {"stage", e.stage}, {"ce", e.ce},
                     {"mp", e.mp},         {"reg", e.reg},     {"total", e.total},
                     {"removed_seeds", e.removed_seeds}};
        log_out << line.dump() << "\n";
    }
    cache.commit();
}

void stage_infer(const std::string& dataset_dir, const std::string& out_dir,
                 const PipelineConfig& cfg, const RunOptions& opts) {
    std::vector<std::string> ids = list_image_ids(dataset_dir);
    fs::path stage_dir = fs::path(out_dir) / "infer";
    fs::create_directories(stage_dir);

    StageCache cache(stage_dir, subset_json({{"stage", "infer"}}));
    cache.add_input(fs::path(out_dir) / "gnn" / "params.tnsr");
    for (const std::string& id : ids) {
        cache.add_input(fs::path(out_dir) / "graphs" / (id + "_graph.tnsr"));
        cache.expect_output(stage_dir / (id + "_probs.tnsr"));
    }
    if (cache.fresh(opts.force)) {
        log_info("infer: cached outputs are fresh, skipping");
        return;
    }

    GnnParams params =
        params_from_tnsr(read_tnsr((fs::path(out_dir) / "gnn" / "params.tnsr").string()));
    for_each_id(ids, opts.jobs, [&](const std::string& id) {
        try {
            PixelGraph graph = graph_from_tnsr(
                read_tnsr((fs::path(out_dir) / "graphs" / (id + "_graph.tnsr")).string()));
            ForwardTrace trace = forward(graph, params, false, 0);
            Tnsr t;
            t.add_f64("O",
                      {static_cast<uint64_t>(trace.o.rows), static_cast<uint64_t>(trace.o.cols)},
                      trace.o.v);
            t.add_f64("grid", {2},
                      {static_cast<double>(graph.grid_width), static_cast<double>(graph.grid_height)});
            write_tnsr(t, (stage_dir / (id + "_probs.tnsr")).string());
        } catch (const std::exception& e) {
            throw std::runtime_error("image " + id + ": " + e.what());
        }
    });
    cache.commit();
}

void stage_refine(const std::string& dataset_dir, const std::string& out_dir,
                  const PipelineConfig& cfg, const RunOptions& opts) {
    std::vector<std::string> ids = list_image_ids(dataset_dir);
    fs::path stage_dir = fs::path(out_dir) / "refine";
    fs::create_directories(stage_dir);

    StageCache cache(stage_dir, subset_json({{"stage", "refine"},
                                             {"crf_iterations", cfg.crf_iterations},
                                             {"crf_w1", cfg.crf_w1},
                                             {"crf_theta_alpha", cfg.crf_theta_alpha},
                                             {"crf_theta_beta", cfg.crf_theta_beta},
                                             {"crf_w2", cfg.crf_w2},
                                             {"crf_theta_gamma", cfg.crf_theta_gamma}}));
    for (const std::string& id : ids) {
        cache.add_input(dataset_file(dataset_dir, "images", id, ".ppm"));
        cache.add_input(fs::path(out_dir) / "infer" / (id + "_probs.tnsr"));
        cache.expect_output(stage_dir / (id + "_pseudo.pgm"));
        cache.expect_output(stage_dir / (id + "_dense.tnsr"));
    }
    if (cache.fresh(opts.force)) {
        log_info("refine: cached outputs are fresh, skipping");
        return;
    }

    for_each_id(ids, opts.jobs, [&](const std::string& id) {
        try {
            ImageRgb image = read_ppm(dataset_file(dataset_dir, "images", id, ".ppm").string());
            int gw = 0, gh = 0;
            Mat o = probmap_from_tnsr(
                read_tnsr((fs::path(out_dir) / "infer" / (id + "_probs.tnsr")).string()), gw, gh);
            DenseProbMap dense = upsample_probs(o, gw, gh, image.width, image.height);
            DenseProbMap refined = crf_refine(dense, image, cfg.crf_config());
            LabelMap labels = to_labels(refined);

            write_pgm(labels, (stage_dir / (id + "_pseudo.pgm")).string());
            Tnsr t;
            t.add_f64("P",
                      {static_cast<uint64_t>(refined.height), static_cast<uint64_t>(refined.width),
                       static_cast<uint64_t>(refined.channels)},
                      refined.data);
            write_tnsr(t, (stage_dir / (id + "_dense.tnsr")).string());
        } catch (const std::exception& e) {
            throw std::runtime_error("image " + id + ": " + e.what());
        }
    });
    cache.commit();
}

void stage_instances(const std::string& dataset_dir, const std::string& out_dir,
                     const PipelineConfig& cfg, const RunOptions& opts) {
    std::vector<std::string> ids = list_image_ids(dataset_dir);
    fs::path stage_dir = fs::path(out_dir) / "instances";
    fs::create_directories(stage_dir);

    StageCache cache(stage_dir, subset_json({{"stage", "instances"}}));
    for (const std::string& id : ids) {
        cache.add_input(fs::path(out_dir) / "refine" / (id + "_pseudo.pgm"));
        cache.add_input(fs::path(out_dir) / "refine" / (id + "_dense.tnsr"));
        cache.add_input(dataset_file(dataset_dir, "boxes", id, ".json"));
        cache.expect_output(stage_dir / (id + "_index.json"));
    }
    if (cache.fresh(opts.force)) {
        log_info("instances: cached outputs are fresh, skipping");
        return;
    }

    for_each_id(ids, opts.jobs, [&](const std::string& id) {
        try {
            LabelMap labels =
                read_pgm((fs::path(out_dir) / "refine" / (id + "_pseudo.pgm")).string());
            Tnsr dt = read_tnsr((fs::path(out_dir) / "refine" / (id + "_dense.tnsr")).string());
            const TnsrSection& ps = dt.at("P");
            DenseProbMap dense(static_cast<int>(ps.dims[1]), static_cast<int>(ps.dims[0]),
                               static_cast<int>(ps.dims[2]));
            dense.data = ps.as_f64();
            BoxSet boxes = read_boxes_json(dataset_file(dataset_dir, "boxes", id, ".json").string());

            std::vector<InstanceMask> instances = to_instances(labels, dense, boxes);
            json index = json::array();
            for (const InstanceMask& m : instances) {
                std::string file = id + "_inst" + std::to_string(m.box_index) + ".pgm";
                LabelMap mask(m.width, m.height, 0);
                for (size_t i = 0; i < m.mask.size(); ++i) mask.data[i] = m.mask[i] ? 255 : 0;
                write_pgm(mask, (stage_dir / file).string());
                index.push_back({{"box", m.box_index},
                                 {"class", m.cls},
                                 {"confidence", m.confidence},
                                 {"file", file}});
            }
            std::ofstream out(stage_dir / (id + "_index.json"), std::ios::binary);
            out << index.dump(2) << "\n";
        } catch (const std::exception& e) {
            throw std::runtime_error("image " + id + ": " + e.what());
        }
    });
    cache.commit();
}

double stage_eval(const std::string& dataset_dir, const std::string& out_dir,
                  const PipelineConfig& cfg, const RunOptions& opts) {
    (void)opts;
    std::vector<std::string> ids = list_image_ids(dataset_dir);

    std::vector<long long> tp(cfg.n_classes, 0), fp(cfg.n_classes, 0), fn(cfg.n_classes, 0);
    for (const std::string& id : ids) {
        fs::path gt_path = dataset_file(dataset_dir, "gt", id, ".pgm");
        require_file(gt_path, id);
        LabelMap gt = read_pgm(gt_path.string());
        LabelMap pred = read_pgm((fs::path(out_dir) / "refine" / (id + "_pseudo.pgm")).string());
        if (!pred.same_dims(gt))
            throw std::runtime_error("image " + id + ": prediction/gt dimension mismatch");
        for (size_t i = 0; i < gt.size(); ++i) {
            uint8_t g = gt.data[i];
            if (g == LabelMap::kUnknown) continue;
            uint8_t q = pred.data[i];
            if (q == g) {
                ++tp[g];
            } else {
                ++fn[g];
                if (q != LabelMap::kUnknown && q < cfg.n_classes) ++fp[q];
            }
        }
    }

    json per_class = json::array();
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < cfg.n_classes; ++c) {
        long long denom = tp[c] + fp[c] + fn[c];
        if (denom == 0) {
            per_class.push_back(nullptr);
            continue;
        }
        double iou = static_cast<double>(tp[c]) / static_cast<double>(denom);
        per_class.push_back(iou);
        sum += iou;
        ++defined;
    }
    double mean = defined > 0 ? sum / defined : 0.0;

    json metrics = {{"per_class", per_class}, {"miou", mean}};
    std::ofstream out(fs::path(out_dir) / "metrics.json", std::ios::binary);
    out << metrics.dump(2) << "\n";
    log_info("eval: mIoU " + std::to_string(mean));
    return mean;
}

double run_pipeline(const std::string& dataset_dir, const std::string& out_dir,
                    const PipelineConfig& cfg, const RunOptions& opts) {
    fs::create_directories(out_dir);
    cfg.save((fs::path(out_dir) / "config.json").string());

    auto guarded = [&](const char* stage, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("pipeline: stage ") + stage + " failed: " +
                                     e.what());
        }
    };

    guarded("seeds", [&] {
        int failures = stage_seeds(dataset_dir, out_dir, cfg, opts);
        if (failures > 0)
            throw std::runtime_error(std::to_string(failures) + " image(s) failed");
    });
    guarded("train-affinity", [&] { stage_train_affinity(dataset_dir, out_dir, cfg, opts); });
    guarded("build-graph", [&] { stage_build_graph(dataset_dir, out_dir, cfg, opts); });
    guarded("train-gnn", [&] { stage_train_gnn(dataset_dir, out_dir, cfg, opts); });
    guarded("infer", [&] { stage_infer(dataset_dir, out_dir, cfg, opts); });
    guarded("refine", [&] { stage_refine(dataset_dir, out_dir, cfg, opts); });

    double mean = -1.0;
    if (fs::is_directory(fs::path(dataset_dir) / "gt"))
        guarded("eval", [&] { mean = stage_eval(dataset_dir, out_dir, cfg, opts); });
    return mean;
}

void train_gnn_from_dirs(const std::string& graphs_dir, const std::string& labels_dir,
                         const std::string& boxes_dir, const std::string& out_params,
                         const std::string& out_log, const PipelineConfig& cfg,
                         bool stage1_only) {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(graphs_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".tnsr") continue;
        std::string stem = entry.path().stem().string();
        if (stem.size() > 6 && stem.substr(stem.size() - 6) == "_graph")
            stem = stem.substr(0, stem.size() - 6);
        ids.push_back(stem);
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw std::runtime_error("train-gnn: no graph files in " + graphs_dir);

    std::vector<TrainItem> corpus;
    for (const std::string& id : ids) {
        TrainItem item;
        item.id = id;
        fs::path gpath = fs::path(graphs_dir) / (id + "_graph.tnsr");
        if (!fs::exists(gpath)) gpath = fs::path(graphs_dir) / (id + ".tnsr");
        item.graph = graph_from_tnsr(read_tnsr(gpath.string()));

        fs::path lpath = fs::path(labels_dir) / (id + ".pgm");
        if (!fs::exists(lpath)) lpath = fs::path(labels_dir) / (id + "_mg.pgm");
        require_file(lpath, id);
        LabelMap labels = read_pgm(lpath.string());
        int boxes_stride = cfg.stride;
        if (labels.width == item.graph.grid_width && labels.height == item.graph.grid_height) {
            item.labels = std::move(labels);
            boxes_stride = 1;
        } else {
            item.labels = downsample(labels, cfg.stride);
            if (item.labels.width != item.graph.grid_width ||
                item.labels.height != item.graph.grid_height)
                throw std::runtime_error("image " + id + ": label grid does not match graph grid");
        }

        fs::path bpath = fs::path(boxes_dir) / (id + ".json");
        require_file(bpath, id);
        BoxSet boxes = read_boxes_json(bpath.string());
        item.boxes = scale_boxes_to_grid(boxes, boxes_stride, item.graph.grid_width,
                                         item.graph.grid_height);
        corpus.push_back(std::move(item));
    }

    TrainConfig tcfg = cfg.train_config();
    if (stage1_only) tcfg.stage_split = tcfg.epochs;
    TrainResult result = train(corpus, tcfg);

    write_tnsr(params_to_tnsr(result.params), out_params);
    std::ofstream log_out(out_log, std::ios::binary);
    if (!log_out) throw std::runtime_error("train-gnn: cannot write " + out_log);
    for (const EpochLog& e : result.log) {
        json line = {{"epoch", e.epoch},   {"stage", e.stage}, {"ce", e.ce},
                     {"mp", e.mp},         {"reg", e.reg},     {"total", e.total},
                     {"removed_seeds", e.removed_seeds}};
        log_out << line.dump() << "\n";
    }
}

} // namespace a2gnn
