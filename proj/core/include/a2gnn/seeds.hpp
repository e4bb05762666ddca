#pragma once

#include "a2gnn/label_map.hpp"

namespace a2gnn {

// Seed-label algebra: assembling per-box mask fragments into a full map,
// fusing box seeds with image-level seeds, confidence filtering, grid
// downsampling and affinity pair extraction.

// Application order for overlapping boxes: descending area, so the smaller
// box is applied last and overrides. Ties on area fall back to box index,
// later index applied last.
std::vector<size_t> box_application_order(const BoxSet& boxes);

// Index of the governing box per pixel (the last applied box containing it),
// -1 outside every box.
std::vector<int> governing_box(const BoxSet& boxes, int width, int height);

// Paints per-box fragments over a background map. Fragments are box-sized
// label maps whose values are either the box class or unknown; pixels outside
// every box become background.
LabelMap assemble_box_seeds(const std::vector<LabelMap>& per_box_masks, const BoxSet& boxes,
                            int width, int height);

// Merges image-level seeds m_i with box seeds m_b. Outside all boxes the box
// seed (background) wins; inside a box the image-level label is kept where it
// agrees with the box seed; if the governing box's class never occurs in m_i
// within that box, the box seed wins; everything else is unknown. The score
// map participates only in dimension validation here.
LabelMap fuse_seeds(const LabelMap& m_i, const ScoreMap& score, const LabelMap& m_b,
                    const BoxSet& boxes);

// Keeps only confident fused labels: a fused label survives where it agrees
// with the box seed, or with the image-level seed restricted to its top
// `ratio` fraction of per-class confidence scores.
LabelMap select_confident(const LabelMap& m_f, const LabelMap& m_b, const LabelMap& m_i,
                          const ScoreMap& score, double ratio = 0.4);

// The confidence filter on the image-level seeds alone (exposed for tests and
// for the image-level task variants).
LabelMap confident_image_seeds(const LabelMap& m_i, const ScoreMap& score, double ratio);

// Nearest-neighbor downsampling at cell centers; output is
// ceil(H/stride) x ceil(W/stride).
LabelMap downsample(const LabelMap& m, int stride);

// All unordered pixel pairs (i < j, row-major indices) within Euclidean grid
// distance `radius` whose labels are both known; label 1 iff equal.
PairLabelSet affinity_pairs(const LabelMap& m, double radius);

// Maps image-resolution boxes onto the node grid: divide by stride, round
// outward, clamp to the grid. Boxes that collapse to an empty range are
// dropped (the caller is warned via the log).
BoxSet scale_boxes_to_grid(const BoxSet& boxes, int stride, int grid_width, int grid_height);

} // namespace a2gnn
