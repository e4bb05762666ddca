#pragma once

#include "a2gnn/config.hpp"
#include "a2gnn/label_map.hpp"

#include <string>
#include <vector>

namespace a2gnn {

struct RunOptions {
    bool force = false;   // ignore cached stage outputs
    int jobs = 1;         // per-image parallelism inside a stage
    bool stage1_only = false;
};

// Image ids are the sorted basenames of dataset/images/*.ppm.
std::vector<std::string> list_image_ids(const std::string& dataset_dir);

// JSON box array [{"class":c,"x0":..,"y0":..,"x1":..,"y1":..}, ...].
BoxSet read_boxes_json(const std::string& path);
void write_boxes_json(const BoxSet& boxes, const std::string& path);

// Score maps live in a TNSR section "scores" with dims (classes, H, W).
ScoreMap read_scores(const std::string& path);

// Mean cell color per node of the stride-downsampled grid.
std::vector<std::array<double, 3>> node_colors(const ImageRgb& img, int stride, int& grid_width,
                                               int& grid_height);

// Stage entry points. Every stage writes under out_dir, caches its outputs
// keyed by a content hash of the inputs plus the relevant config subset, and
// reuses them unless `force` is set.
//
// stage_seeds returns the number of images that failed (each reported and
// skipped); the others throw on the first error, naming the image.
int stage_seeds(const std::string& dataset_dir, const std::string& out_dir,
                const PipelineConfig& cfg, const RunOptions& opts);
void stage_train_affinity(const std::string& dataset_dir, const std::string& out_dir,
                          const PipelineConfig& cfg, const RunOptions& opts);
void stage_build_graph(const std::string& dataset_dir, const std::string& out_dir,
                       const PipelineConfig& cfg, const RunOptions& opts);
void stage_train_gnn(const std::string& dataset_dir, const std::string& out_dir,
                     const PipelineConfig& cfg, const RunOptions& opts);
void stage_infer(const std::string& dataset_dir, const std::string& out_dir,
                 const PipelineConfig& cfg, const RunOptions& opts);
void stage_refine(const std::string& dataset_dir, const std::string& out_dir,
                  const PipelineConfig& cfg, const RunOptions& opts);
void stage_instances(const std::string& dataset_dir, const std::string& out_dir,
                     const PipelineConfig& cfg, const RunOptions& opts);
double stage_eval(const std::string& dataset_dir, const std::string& out_dir,
                  const PipelineConfig& cfg, const RunOptions& opts);

// Runs seeds .. refine (plus eval when dataset/gt exists); halts on the first
// stage failure, naming the stage. Returns the final mIoU, or -1 without
// ground truth.
double run_pipeline(const std::string& dataset_dir, const std::string& out_dir,
                    const PipelineConfig& cfg, const RunOptions& opts);

// Explicit-directory training entry: graphs (<id>_graph.tnsr or <id>.tnsr),
// image-resolution label maps (<id>.pgm or <id>_mg.pgm, downsampled by
// cfg.stride unless already on the node grid) and box JSONs (<id>.json).
void train_gnn_from_dirs(const std::string& graphs_dir, const std::string& labels_dir,
                         const std::string& boxes_dir, const std::string& out_params,
                         const std::string& out_log, const PipelineConfig& cfg,
                         bool stage1_only = false);

} // namespace a2gnn
