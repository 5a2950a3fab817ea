#pragma once

#include <cstdint>
#include <vector>

namespace sage {

// 2D grayscale raster with intensities in [0, 1]; the universal image carrier.
struct ImageGrid {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // row-major, height*width

    ImageGrid() = default;
    ImageGrid(int h, int w, double fill = 0.0)
        : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {}

    double& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return pixels.size(); }

    // Throws if dimensions are below the 8x8 minimum or any pixel leaves [0,1].
    void validate() const;
    void clamp01();
};

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> pixels;  // row-major, values in {0,1}

    BinaryMask() = default;
    BinaryMask(int h, int w, uint8_t fill = 0)
        : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {}

    uint8_t& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
    uint8_t at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return pixels.size(); }

    int foreground_count() const;
    ImageGrid to_image() const;
    void validate() const;  // dimensions and {0,1} values
};

// pixel = 1 iff image pixel >= threshold; threshold must lie in (0,1).
BinaryMask binarize(const ImageGrid& image, double threshold = 0.5);

// Integer raster as read from disk, bit depth 8 or 16.
struct RawRaster {
    int height = 0;
    int width = 0;
    int bit_depth = 8;               // 8 or 16
    std::vector<uint16_t> samples;   // row-major
};

// Divides by 2^b - 1. Throws on unsupported bit depth.
ImageGrid normalize(const RawRaster& raw);

}  // namespace sage
