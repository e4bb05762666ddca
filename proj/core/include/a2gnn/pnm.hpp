#pragma once

#include "a2gnn/label_map.hpp"

#include <string>

namespace a2gnn {

// Binary PGM (P5) and PPM (P6), maxval 255. Readers accept comments and
// arbitrary whitespace; writers emit a canonical header (single spaces, no
// comments) so outputs are byte-stable.

LabelMap read_pgm(const std::string& path);
void write_pgm(const LabelMap& m, const std::string& path);

ImageRgb read_ppm(const std::string& path);
void write_ppm(const ImageRgb& img, const std::string& path);

} // namespace a2gnn
