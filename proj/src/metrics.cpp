#include "sage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sage/imgproc.hpp"

namespace sage {

namespace {

// inclusive-prefix integral image, (h+1)x(w+1)
std::vector<double> integral(const ImageGrid& a, const ImageGrid& b) {
    const int h = a.height, w = a.width;
    std::vector<double> s(static_cast<size_t>(h + 1) * (w + 1), 0.0);
    for (int r = 0; r < h; ++r) {
        double row = 0;
        for (int c = 0; c < w; ++c) {
            row += a.at(r, c) * b.at(r, c);
            s[static_cast<size_t>(r + 1) * (w + 1) + c + 1] =
                s[static_cast<size_t>(r) * (w + 1) + c + 1] + row;
        }
    }
    return s;
}

double window_sum(const std::vector<double>& s, int w_img, int r, int c, int win) {
    const int W = w_img + 1;
    return s[static_cast<size_t>(r + win) * W + c + win] - s[static_cast<size_t>(r) * W + c + win] -
           s[static_cast<size_t>(r + win) * W + c] + s[static_cast<size_t>(r) * W + c];
}

double ssim_uniform(const ImageGrid& x, const ImageGrid& y, const SsimParams& p) {
    const int win = p.window;
    const double n = static_cast<double>(win) * win;
    const double c1 = p.c1(), c2 = p.c2();
    const auto sx = integral(x, x), sy = integral(y, y), sxy = integral(x, y);
    // plain sums reuse the product table trick with an all-ones image
    ImageGrid ones(x.height, x.width, 1.0);
    const auto s1x = integral(x, ones), s1y = integral(y, ones);

    double acc = 0;
    int count = 0;
    for (int r = 0; r + win <= x.height; ++r) {
        for (int c = 0; c + win <= x.width; ++c) {
            const double mx = window_sum(s1x, x.width, r, c, win) / n;
            const double my = window_sum(s1y, x.width, r, c, win) / n;
            const double vx = window_sum(sx, x.width, r, c, win) / n - mx * mx;
            const double vy = window_sum(sy, x.width, r, c, win) / n - my * my;
            const double cov = window_sum(sxy, x.width, r, c, win) / n - mx * my;
            const double num = (2 * mx * my + c1) * (2 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            acc += num / den;
            ++count;
        }
    }
    return acc / count;
}

double ssim_gaussian(const ImageGrid& x, const ImageGrid& y, const SsimParams& p) {
    const int win = p.window;
    const double c1 = p.c1(), c2 = p.c2();
    std::vector<double> k(static_cast<size_t>(win) * win);
    const double half = (win - 1) / 2.0;
    double ksum = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double d2 = (i - half) * (i - half) + (j - half) * (j - half);
            k[static_cast<size_t>(i) * win + j] =
                std::exp(-d2 / (2 * p.gaussian_sigma * p.gaussian_sigma));
            ksum += k[static_cast<size_t>(i) * win + j];
        }
    for (double& v : k) v /= ksum;

    double acc = 0;
    int count = 0;
    for (int r = 0; r + win <= x.height; ++r) {
        for (int c = 0; c + win <= x.width; ++c) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wgt = k[static_cast<size_t>(i) * win + j];
                    const double xv = x.at(r + i, c + j), yv = y.at(r + i, c + j);
                    mx += wgt * xv;
                    my += wgt * yv;
                    sxx += wgt * xv * xv;
                    syy += wgt * yv * yv;
                    sxy += wgt * xv * yv;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
            acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return acc / count;
}

}  // namespace

double ssim(const ImageGrid& x, const ImageGrid& y, const SsimParams& params) {
    if (x.height != y.height || x.width != y.width)
        throw std::invalid_argument("ssim: image dimensions differ");
    if (params.window < 2 || params.window > std::min(x.height, x.width))
        throw std::invalid_argument("ssim: window does not fit the images");
    return params.gaussian ? ssim_gaussian(x, y, params) : ssim_uniform(x, y, params);
}

double inception_score(const std::vector<ClassProbabilities>& probs) {
    if (probs.empty()) throw std::invalid_argument("inception_score: empty probability list");
    const size_t classes = probs[0].size();
    if (classes < 1) throw std::invalid_argument("inception_score: empty probability vector");

    std::vector<double> marginal(classes, 0.0);
    for (const auto& p : probs) {
        if (p.size() != classes)
            throw std::invalid_argument("inception_score: inconsistent class counts");
        double sum = 0;
        for (double v : p) {
            if (v < -1e-12) throw std::invalid_argument("inception_score: negative probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("inception_score: probabilities must sum to 1");
        for (size_t c = 0; c < classes; ++c) marginal[c] += p[c];
    }
    for (double& v : marginal) v /= static_cast<double>(probs.size());

    double mean_kl = 0;
    for (const auto& p : probs) {
        double kl = 0;
        for (size_t c = 0; c < classes; ++c) {
            if (p[c] <= 0) continue;  // 0*log(0) = 0
            kl += p[c] * std::log(p[c] / marginal[c]);
        }
        mean_kl += kl;
    }
    mean_kl /= static_cast<double>(probs.size());
    // KL is nonnegative and bounded by log(C) analytically; the clamp only
    // absorbs floating-point round-off at the boundary cases
    mean_kl = std::clamp(mean_kl, 0.0, std::log(static_cast<double>(classes)));
    return std::exp(mean_kl);
}

double mean_pairwise_ssim(const std::vector<ImageGrid>& synthetic,
                          const std::vector<ImageGrid>& real, int pairs, RngHandle& rng,
                          const SsimParams& params) {
    if (synthetic.empty() || real.empty())
        throw std::invalid_argument("mean_pairwise_ssim: empty image set");
    if (pairs <= 0) throw std::invalid_argument("mean_pairwise_ssim: pairs must be positive");

    int th = synthetic[0].height, tw = synthetic[0].width;
    for (const auto& img : synthetic) {
        th = std::min(th, img.height);
        tw = std::min(tw, img.width);
    }
    for (const auto& img : real) {
        th = std::min(th, img.height);
        tw = std::min(tw, img.width);
    }

    auto prep = [&](const ImageGrid& img) {
        return img.height == th && img.width == tw ? img : resize_bilinear(img, th, tw);
    };
    double acc = 0;
    for (int i = 0; i < pairs; ++i) {
        const auto& s = synthetic[static_cast<size_t>(rng.uniform_int(synthetic.size()))];
        const auto& r = real[static_cast<size_t>(rng.uniform_int(real.size()))];
        acc += ssim(prep(s), prep(r), params);
    }
    return acc / pairs;
}

}  // namespace sage
