#pragma once

#include <filesystem>

#include "polyroom/grid.hpp"

namespace polyroom {

// Binary 8-bit PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const Grid<unsigned char>& image);
Grid<unsigned char> read_pgm(const std::filesystem::path& path);

}  // namespace polyroom
