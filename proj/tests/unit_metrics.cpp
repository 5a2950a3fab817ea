#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sage/metrics.hpp"
#include "test_util.hpp"

using namespace sage;

namespace {

// straight re-derivation of SSIM: per-window means/variances/covariance by
// direct double loops, no shared code with the production path
double reference_ssim(const ImageGrid& x, const ImageGrid& y, const SsimParams& p) {
    const int win = p.window;
    const double n = static_cast<double>(win) * win;
    double acc = 0;
    int count = 0;
    for (int r = 0; r + win <= x.height; ++r) {
        for (int c = 0; c + win <= x.width; ++c) {
            double mx = 0, my = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    mx += x.at(r + i, c + j);
                    my += y.at(r + i, c + j);
                }
            mx /= n;
            my /= n;
            double vx = 0, vy = 0, cov = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double dx = x.at(r + i, c + j) - mx;
                    const double dy = y.at(r + i, c + j) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            vx /= n;
            vy /= n;
            cov /= n;
            acc += ((2 * mx * my + p.c1()) * (2 * cov + p.c2())) /
                   ((mx * mx + my * my + p.c1()) * (vx + vy + p.c2()));
            ++count;
        }
    }
    return acc / count;
}

}  // namespace

TEST_CASE("ssim: self-similarity is exactly 1") {
    RngHandle rng(21, "ssim-self");
    for (int t = 0; t < 5; ++t) {
        ImageGrid x = test::random_image(20, 20, rng);
        CHECK(ssim(x, x) == 1.0);
    }
}

TEST_CASE("ssim: symmetric in its arguments") {
    RngHandle rng(22, "ssim-sym");
    for (int t = 0; t < 100; ++t) {
        ImageGrid x = test::random_image(12, 12, rng);
        ImageGrid y = test::random_image(12, 12, rng);
        CHECK(ssim(x, y) == ssim(y, x));
    }
}

TEST_CASE("ssim: constant images closed form") {
    ImageGrid zeros(16, 16, 0.0), ones(16, 16, 1.0);
    SsimParams p;
    const double expected = p.c1() / (1.0 + p.c1());  // luminance collapses, contrast term is 1
    CHECK(ssim(zeros, ones, p) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim: agrees with an independent reference implementation") {
    RngHandle rng(23, "ssim-ref");
    SsimParams p;
    for (int t = 0; t < 100; ++t) {
        ImageGrid x = test::random_image(24, 24, rng);
        ImageGrid y = test::random_image(24, 24, rng);
        CHECK(std::abs(ssim(x, y, p) - reference_ssim(x, y, p)) < 1e-4);
    }
}

TEST_CASE("ssim: luminance shift changes little") {
    RngHandle rng(24, "ssim-shift");
    ImageGrid x(16, 16), y(16, 16);
    for (auto& v : x.pixels) v = rng.uniform(0.2, 0.5);
    for (auto& v : y.pixels) v = rng.uniform(0.2, 0.5);
    ImageGrid xs = x, ys = y;
    for (auto& v : xs.pixels) v += 0.2;
    for (auto& v : ys.pixels) v += 0.2;
    CHECK(std::abs(ssim(x, y) - ssim(xs, ys)) < 1e-3);
}

TEST_CASE("ssim: dimension mismatch") {
    ImageGrid a(16, 16, 0.5), b(16, 18, 0.5);
    CHECK_THROWS(ssim(a, b));
}

TEST_CASE("inception score: analytic cases") {
    // conditional == marginal -> exactly 1
    std::vector<ClassProbabilities> uniform(40, ClassProbabilities{0.5, 0.5});
    CHECK(std::abs(inception_score(uniform) - 1.0) < 1e-6);

    // balanced one-hot conditionals -> number of classes
    std::vector<ClassProbabilities> onehot;
    for (int i = 0; i < 50; ++i) onehot.push_back({1.0, 0.0});
    for (int i = 0; i < 50; ++i) onehot.push_back({0.0, 1.0});
    CHECK(std::abs(inception_score(onehot) - 2.0) < 1e-6);

    // hand-computed two-image case
    std::vector<ClassProbabilities> two = {{0.9, 0.1}, {0.2, 0.8}};
    const double m0 = (0.9 + 0.2) / 2.0, m1 = (0.1 + 0.8) / 2.0;
    const double kl1 = 0.9 * std::log(0.9 / m0) + 0.1 * std::log(0.1 / m1);
    const double kl2 = 0.2 * std::log(0.2 / m0) + 0.8 * std::log(0.8 / m1);
    const double expected = std::exp((kl1 + kl2) / 2.0);
    CHECK(inception_score(two) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(inception_score(two) == doctest::Approx(1.317).epsilon(1e-3));
}

TEST_CASE("inception score: bounds and permutation invariance") {
    RngHandle rng(25, "is-bounds");
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + static_cast<int>(rng.uniform_int(50));
        std::vector<ClassProbabilities> probs;
        for (int i = 0; i < n; ++i) {
            double a = rng.uniform01();
            probs.push_back({a, 1.0 - a});
        }
        const double is = inception_score(probs);
        CHECK(is >= 1.0);
        CHECK(is <= 2.0);

        std::vector<ClassProbabilities> shuffled = probs;
        rng.shuffle(shuffled);
        CHECK(std::abs(inception_score(shuffled) - is) < 1e-12);
    }
}

TEST_CASE("inception score: input validation") {
    CHECK_THROWS(inception_score({}));
    CHECK_THROWS(inception_score({{0.7, 0.7}}));
    CHECK_THROWS(inception_score({{-0.1, 1.1}}));
    CHECK_THROWS(inception_score({{0.5, 0.5}, {0.5, 0.3, 0.2}}));
}

TEST_CASE("mean pairwise ssim: degenerate and constant cases") {
    RngHandle rng(26, "pair");
    ImageGrid x = test::random_image(16, 16, rng);
    const double one = mean_pairwise_ssim({x}, {x}, 10, rng);
    CHECK(one == 1.0);

    SsimParams p;
    ImageGrid zeros(16, 16, 0.0), ones(16, 16, 1.0);
    const double v = mean_pairwise_ssim({zeros}, {ones}, 5, rng, p);
    CHECK(v == doctest::Approx(p.c1() / (1.0 + p.c1())).epsilon(1e-12));

    for (int t = 0; t < 10; ++t) {
        ImageGrid a = test::random_image(12, 16, rng), b = test::random_image(16, 12, rng);
        const double s = mean_pairwise_ssim({a}, {b}, 3, rng);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }
    CHECK_THROWS(mean_pairwise_ssim({}, {x}, 5, rng));
    CHECK_THROWS(mean_pairwise_ssim({x}, {x}, 0, rng));
}
