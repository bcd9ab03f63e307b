#pragma once

#include <string>

#include "boltzseg/grid.hpp"

namespace boltzseg {

// Binary PGM (P5, maxval 255) with linear min-max scaling. The scaling is
// recorded in "<path>.txt" so values can be recovered from the 8-bit image.
void write_pgm(const SpatialField& field, const std::string& path);

// PGM without the sidecar, for already-quantized content.
void write_pgm_raw(const SpatialField& field, const std::string& path);

// Reads a P5 PGM back as a 1-channel field of raw byte values in [0, 255].
SpatialField read_pgm(const std::string& path);

// Binary PBM (P4): nonzero -> 1.
void write_pbm(const SpatialField& field, const std::string& path);
SpatialField read_pbm(const std::string& path);

}  // namespace boltzseg
