#pragma once

#include <cstdint>
#include <string>

namespace a2gnn {

struct FixtureConfig {
    int n_images = 10;
    int width = 32;
    int height = 32;
    uint64_t seed = 0;
    double seed_coverage = 0.30; // fraction of pixels carrying an initial label
    double noise_rate = 0.10;    // fraction of those labels that are wrong
};

// Emits a synthetic color-separable dataset under `dir`: images/ (PPM),
// seeds/ (PGM), scores/ (TNSR), boxes/ (JSON), gt/ (PGM) and a matching
// config.json. Each image holds one object of each of the two foreground
// classes with a tight box; foreground seeds concentrate on one corner patch
// of the object, mimicking labels that cover only a discriminative part.
void generate_fixtures(const std::string& dir, const FixtureConfig& cfg);

} // namespace a2gnn
