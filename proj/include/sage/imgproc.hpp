#pragma once

#include "sage/image.hpp"

namespace sage {

// Bilinear resize; edge samples clamp to the border.
ImageGrid resize_bilinear(const ImageGrid& img, int out_h, int out_w);

// Rotates counter-clockwise by `degrees` about the image center into a canvas
// large enough to hold the rotated extent; uncovered pixels are 0.
ImageGrid rotate_expand(const ImageGrid& img, double degrees);

// Separable Gaussian blur with an explicit kernel radius (radius 0 = identity).
ImageGrid gaussian_blur(const ImageGrid& img, double sigma, int radius);
int default_blur_radius(double sigma);  // ceil(3*sigma)

// Otsu's threshold over the [0,1] histogram (256 bins).
double otsu_threshold(const ImageGrid& img);

// 3x3 morphological closing (dilate then erode), `iterations` times each.
BinaryMask morphological_close(const BinaryMask& mask, int iterations = 1);

// Number of 4-connected foreground components.
int connected_components(const BinaryMask& mask);

struct Centroid {
    double row = 0, col = 0;
};
Centroid mask_centroid(const BinaryMask& mask);

// Principal-axis angle from second central moments, degrees in [-90, 90).
// Positive angles rotate the major axis counter-clockwise from the +col axis.
double principal_angle_deg(const BinaryMask& mask);

}  // namespace sage
