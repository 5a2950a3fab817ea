#include "sage/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

namespace sage {

namespace {

double sample_clamped(const ImageGrid& img, double r, double c) {
    r = std::clamp(r, 0.0, static_cast<double>(img.height - 1));
    c = std::clamp(c, 0.0, static_cast<double>(img.width - 1));
    int r0 = static_cast<int>(std::floor(r));
    int c0 = static_cast<int>(std::floor(c));
    int r1 = std::min(r0 + 1, img.height - 1);
    int c1 = std::min(c0 + 1, img.width - 1);
    double fr = r - r0, fc = c - c0;
    return (1 - fr) * ((1 - fc) * img.at(r0, c0) + fc * img.at(r0, c1)) +
           fr * ((1 - fc) * img.at(r1, c0) + fc * img.at(r1, c1));
}

// Zero outside the source extent.
double sample_zero(const ImageGrid& img, double r, double c) {
    if (r < -1.0 || c < -1.0 || r > img.height || c > img.width) return 0.0;
    int r0 = static_cast<int>(std::floor(r));
    int c0 = static_cast<int>(std::floor(c));
    double fr = r - r0, fc = c - c0;
    auto px = [&](int rr, int cc) -> double {
        if (rr < 0 || cc < 0 || rr >= img.height || cc >= img.width) return 0.0;
        return img.at(rr, cc);
    };
    return (1 - fr) * ((1 - fc) * px(r0, c0) + fc * px(r0, c0 + 1)) +
           fr * ((1 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1));
}

}  // namespace

ImageGrid resize_bilinear(const ImageGrid& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0)
        throw std::invalid_argument("resize_bilinear: non-positive output size");
    if (out_h == img.height && out_w == img.width) return img;
    ImageGrid out(out_h, out_w);
    const double sr = static_cast<double>(img.height) / out_h;
    const double sc = static_cast<double>(img.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double src_r = (r + 0.5) * sr - 0.5;
        for (int c = 0; c < out_w; ++c) {
            double src_c = (c + 0.5) * sc - 0.5;
            out.at(r, c) = sample_clamped(img, src_r, src_c);
        }
    }
    return out;
}

ImageGrid rotate_expand(const ImageGrid& img, double degrees) {
    const double th = degrees * M_PI / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const int out_w = static_cast<int>(std::ceil(std::abs(img.width * ct) + std::abs(img.height * st)));
    const int out_h = static_cast<int>(std::ceil(std::abs(img.height * ct) + std::abs(img.width * st)));
    ImageGrid out(std::max(out_h, 1), std::max(out_w, 1));
    const double icr = (img.height - 1) / 2.0, icc = (img.width - 1) / 2.0;
    const double ocr = (out.height - 1) / 2.0, occ = (out.width - 1) / 2.0;
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            double dc = c - occ, dr = r - ocr;
            // inverse of the forward rotation (dc,dr) -> (ct*dc - st*dr, st*dc + ct*dr)
            double src_c = ct * dc + st * dr + icc;
            double src_r = -st * dc + ct * dr + icr;
            out.at(r, c) = sample_zero(img, src_r, src_c);
        }
    }
    return out;
}

int default_blur_radius(double sigma) {
    return sigma <= 0 ? 0 : static_cast<int>(std::ceil(3.0 * sigma));
}

ImageGrid gaussian_blur(const ImageGrid& img, double sigma, int radius) {
    if (radius <= 0 || sigma <= 0) return img;
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;

    // horizontal then vertical, zero padding outside the image
    ImageGrid tmp(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                int cc = c + i;
                if (cc >= 0 && cc < img.width) acc += k[i + radius] * img.at(r, cc);
            }
            tmp.at(r, c) = acc;
        }
    }
    ImageGrid out(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                int rr = r + i;
                if (rr >= 0 && rr < img.height) acc += k[i + radius] * tmp.at(rr, c);
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

double otsu_threshold(const ImageGrid& img) {
    constexpr int kBins = 256;
    std::vector<double> hist(kBins, 0.0);
    for (double v : img.pixels) {
        int b = std::min(kBins - 1, static_cast<int>(v * kBins));
        hist[b] += 1.0;
    }
    const double total = static_cast<double>(img.pixels.size());
    double sum_all = 0;
    for (int i = 0; i < kBins; ++i) sum_all += i * hist[i];

    double w0 = 0, sum0 = 0, best_var = -1.0;
    int best_k = kBins / 2;
    for (int k = 0; k < kBins - 1; ++k) {
        w0 += hist[k];
        if (w0 == 0) continue;
        double w1 = total - w0;
        if (w1 == 0) break;
        sum0 += k * hist[k];
        double mu0 = sum0 / w0;
        double mu1 = (sum_all - sum0) / w1;
        double var_b = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var_b > best_var) {
            best_var = var_b;
            best_k = k;
        }
    }
    if (best_var < 0) {
        // single-level image: threshold at the occupied bin's lower edge
        for (int k = 0; k < kBins; ++k)
            if (hist[k] > 0) return k / static_cast<double>(kBins);
    }
    return (best_k + 1) / static_cast<double>(kBins);
}

namespace {

BinaryMask dilate3(const BinaryMask& m) {
    BinaryMask out(m.height, m.width);
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) {
            uint8_t v = 0;
            for (int dr = -1; dr <= 1 && !v; ++dr)
                for (int dc = -1; dc <= 1 && !v; ++dc) {
                    int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && cc >= 0 && rr < m.height && cc < m.width && m.at(rr, cc))
                        v = 1;
                }
            out.at(r, c) = v;
        }
    return out;
}

BinaryMask erode3(const BinaryMask& m) {
    BinaryMask out(m.height, m.width);
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) {
            uint8_t v = 1;
            for (int dr = -1; dr <= 1 && v; ++dr)
                for (int dc = -1; dc <= 1 && v; ++dc) {
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= m.height || cc >= m.width || !m.at(rr, cc))
                        v = 0;
                }
            out.at(r, c) = v;
        }
    return out;
}

}  // namespace

BinaryMask morphological_close(const BinaryMask& mask, int iterations) {
    BinaryMask m = mask;
    for (int i = 0; i < iterations; ++i) m = dilate3(m);
    for (int i = 0; i < iterations; ++i) m = erode3(m);
    return m;
}

int connected_components(const BinaryMask& mask) {
    std::vector<uint8_t> seen(mask.size(), 0);
    int count = 0;
    std::deque<std::pair<int, int>> queue;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            size_t idx = static_cast<size_t>(r) * mask.width + c;
            if (!mask.pixels[idx] || seen[idx]) continue;
            ++count;
            seen[idx] = 1;
            queue.emplace_back(r, c);
            while (!queue.empty()) {
                auto [cr, cc] = queue.front();
                queue.pop_front();
                constexpr int dr[] = {-1, 1, 0, 0};
                constexpr int dc[] = {0, 0, -1, 1};
                for (int i = 0; i < 4; ++i) {
                    int nr = cr + dr[i], nc = cc + dc[i];
                    if (nr < 0 || nc < 0 || nr >= mask.height || nc >= mask.width) continue;
                    size_t nidx = static_cast<size_t>(nr) * mask.width + nc;
                    if (mask.pixels[nidx] && !seen[nidx]) {
                        seen[nidx] = 1;
                        queue.emplace_back(nr, nc);
                    }
                }
            }
        }
    }
    return count;
}

Centroid mask_centroid(const BinaryMask& mask) {
    double sr = 0, sc = 0;
    int n = 0;
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            if (mask.at(r, c)) {
                sr += r;
                sc += c;
                ++n;
            }
    if (n == 0) throw std::invalid_argument("mask_centroid: empty mask");
    return {sr / n, sc / n};
}

double principal_angle_deg(const BinaryMask& mask) {
    Centroid ctr = mask_centroid(mask);
    double mu20 = 0, mu02 = 0, mu11 = 0;
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            if (mask.at(r, c)) {
                double dc = c - ctr.col, dr = r - ctr.row;
                mu20 += dc * dc;
                mu02 += dr * dr;
                mu11 += dc * dr;
            }
    double angle = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02) * 180.0 / M_PI;
    if (angle >= 90.0) angle -= 180.0;
    return angle;
}

}  // namespace sage
