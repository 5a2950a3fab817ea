#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "sage/image.hpp"
#include "sage/rng.hpp"

namespace sage::test {

inline ImageGrid random_image(int h, int w, RngHandle& rng) {
    ImageGrid img(h, w);
    for (double& v : img.pixels) v = rng.uniform01();
    return img;
}

inline BinaryMask ellipse_mask(int h, int w, double ry, double rx, double angle_deg = 0.0) {
    BinaryMask m(h, w);
    const double th = angle_deg * M_PI / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const double cr = (h - 1) / 2.0, cc = (w - 1) / 2.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double dc = c - cc, dr = r - cr;
            // inverse-rotate into the canonical frame
            const double x = ct * dc + st * dr;
            const double y = -st * dc + ct * dr;
            if ((x * x) / (rx * rx) + (y * y) / (ry * ry) <= 1.0) m.at(r, c) = 1;
        }
    return m;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        dir_ = std::filesystem::temp_directory_path() /
               ("sage_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(dir_);
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() { std::filesystem::remove_all(dir_); }
    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
};

}  // namespace sage::test
