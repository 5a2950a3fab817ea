#pragma once

#include <filesystem>

#include "sage/image.hpp"

namespace sage {

// Binary PGM (P5). Writing quantizes to 8 bits; reading accepts 8- or 16-bit
// maxval and returns the raw integer raster (pass through normalize() to get
// an ImageGrid).
void save_pgm(const ImageGrid& img, const std::filesystem::path& path);
RawRaster load_pgm_raw(const std::filesystem::path& path);
ImageGrid load_pgm(const std::filesystem::path& path);

void save_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask load_mask_pgm(const std::filesystem::path& path);

}  // namespace sage
