#include "sage/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sage {

void ImageGrid::validate() const {
    if (height < 8 || width < 8)
        throw std::invalid_argument("ImageGrid: dimensions must be at least 8x8, got " +
                                    std::to_string(height) + "x" + std::to_string(width));
    if (pixels.size() != static_cast<size_t>(height) * width)
        throw std::invalid_argument("ImageGrid: pixel buffer size mismatch");
    for (double v : pixels) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("ImageGrid: pixel value " + std::to_string(v) +
                                        " outside [0,1]");
    }
}

void ImageGrid::clamp01() {
    for (double& v : pixels) v = std::clamp(v, 0.0, 1.0);
}

int BinaryMask::foreground_count() const {
    int n = 0;
    for (uint8_t v : pixels) n += (v != 0);
    return n;
}

ImageGrid BinaryMask::to_image() const {
    ImageGrid img(height, width);
    for (size_t i = 0; i < pixels.size(); ++i) img.pixels[i] = pixels[i] ? 1.0 : 0.0;
    return img;
}

void BinaryMask::validate() const {
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("BinaryMask: non-positive dimensions");
    if (pixels.size() != static_cast<size_t>(height) * width)
        throw std::invalid_argument("BinaryMask: pixel buffer size mismatch");
    for (uint8_t v : pixels)
        if (v > 1) throw std::invalid_argument("BinaryMask: values must be 0 or 1");
}

BinaryMask binarize(const ImageGrid& image, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("binarize: threshold must lie in (0,1), got " +
                                    std::to_string(threshold));
    BinaryMask mask(image.height, image.width);
    for (size_t i = 0; i < image.pixels.size(); ++i)
        mask.pixels[i] = image.pixels[i] >= threshold ? 1 : 0;
    return mask;
}

ImageGrid normalize(const RawRaster& raw) {
    if (raw.bit_depth != 8 && raw.bit_depth != 16)
        throw std::invalid_argument("normalize: unsupported bit depth " +
                                    std::to_string(raw.bit_depth));
    const double denom = raw.bit_depth == 8 ? 255.0 : 65535.0;
    ImageGrid img(raw.height, raw.width);
    for (size_t i = 0; i < raw.samples.size(); ++i)
        img.pixels[i] = static_cast<double>(raw.samples[i]) / denom;
    return img;
}

}  // namespace sage
