#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "sage/image.hpp"
#include "sage/imgproc.hpp"
#include "sage/nn.hpp"
#include "sage/nn_image.hpp"
#include "sage/rng.hpp"

namespace sage {

// G[a,b] = sum_p F[a,p] * F[b,p] / (C*H*W); symmetric positive semi-definite.
// Accumulated in double regardless of the feature precision.
Eigen::MatrixXd gram_matrix(nn::Shape3 shape, const double* data);
Eigen::MatrixXd gram_matrix(nn::Shape3 shape, const float* data);

struct TanConfig {
    std::vector<double> layer_weights = {1.0, 1.0, 1.0};  // omega_i, one per tap
    double content_weight = 1.0;                          // lambda
    int steps = 60;
    double step_size = 0.5;
    // content: the mask itself (grayscale). content_plus_noise: the mask
    // scaled to mid intensity plus Gaussian noise, leaving the optimizer
    // headroom on both sides of the clamp.
    enum class Init { content, content_plus_noise };
    Init init = Init::content;
    double init_mid_level = 0.55;
    double init_noise_sigma = 0.1;
    bool squared_norms = false;  // Frobenius norms are used as written by default

    // require_style enforces "at least one positive layer weight", which
    // alignment needs; plain loss evaluation also admits the content-only case
    void validate(size_t tap_count, bool require_style = true) const;
};

// Frozen VGG-style conv stack; feature maps are tapped at the last ReLU of
// the selected blocks (the deeper blocks carry the texture statistics).
template <class T>
class FeatureExtractor {
public:
    enum class FrontEnd { random, filter_bank };

    struct Arch {
        int input_size = 64;
        int in_channels = 1;
        std::vector<int> widths = {12, 8, 12, 16, 16};
        std::vector<int> convs_per_block = {1, 1, 1, 1, 1};
        std::vector<int> tap_blocks = {2, 3, 4};  // 0-based block indices
        // blocks followed by a 2x2 average pool
        std::vector<int> pool_after = {0, 2, 3};
        // first block: analytic Gabor/center-surround bank (5x5) instead of
        // random weights; rectified band energies make the deep gram taps
        // texture-selective, standing in for pretrained low-level filters
        FrontEnd front_end = FrontEnd::filter_bank;
    };

    FeatureExtractor(const Arch& arch, RngHandle rng) : arch_(arch) {
        if (arch.widths.size() != arch.convs_per_block.size() || arch.widths.empty())
            throw std::invalid_argument("FeatureExtractor: widths/convs mismatch");
        if (arch.tap_blocks.empty() ||
            arch.tap_blocks.back() != static_cast<int>(arch.widths.size()) - 1)
            throw std::invalid_argument(
                "FeatureExtractor: the last block must be tapped (taps must end the stack)");
        nn::Shape3 cur{arch.in_channels, arch.input_size, arch.input_size};
        for (size_t blk = 0; blk < arch.widths.size(); ++blk) {
            const bool bank =
                blk == 0 && arch.front_end == FrontEnd::filter_bank;
            for (int j = 0; j < arch.convs_per_block[blk]; ++j) {
                const int k = bank ? kBankKernel : 3;
                auto conv = std::make_unique<nn::Conv2d<T>>(cur, arch.widths[blk], k, 1, k / 2,
                                                            rng, nn::InitKind::he,
                                                            /*trainable=*/false);
                if (bank && j == 0) fill_filter_bank(*conv, cur.c, arch.widths[blk]);
                cur = conv->out_shape(cur);
                layers_.push_back(std::move(conv));
                layers_.push_back(std::make_unique<nn::ReLU<T>>());
            }
            if (std::find(arch.tap_blocks.begin(), arch.tap_blocks.end(), static_cast<int>(blk)) !=
                arch.tap_blocks.end()) {
                tap_after_layer_.push_back(static_cast<int>(layers_.size()) - 1);
                tap_shapes_.push_back(cur);
            }
            const bool pool_here =
                std::find(arch.pool_after.begin(), arch.pool_after.end(),
                          static_cast<int>(blk)) != arch.pool_after.end();
            if (pool_here && blk + 1 < arch.widths.size()) {
                auto pool = std::make_unique<nn::AvgPool2<T>>(cur);
                cur = pool->out_shape(cur);
                layers_.push_back(std::move(pool));
            }
        }
    }

    const Arch& arch() const { return arch_; }
    size_t tap_count() const { return tap_shapes_.size(); }
    const std::vector<nn::Shape3>& tap_shapes() const { return tap_shapes_; }
    int input_pixels() const { return arch_.input_size * arch_.input_size; }

    // replicate a grayscale raster across the expected input channels
    nn::Mat<T> lift_input(const nn::Mat<T>& gray) const {
        if (arch_.in_channels == 1) return gray;
        nn::Mat<T> x(static_cast<Eigen::Index>(gray.rows()) * arch_.in_channels, gray.cols());
        for (int c = 0; c < arch_.in_channels; ++c)
            x.middleRows(static_cast<Eigen::Index>(c) * gray.rows(), gray.rows()) = gray;
        return x;
    }

    std::vector<nn::Mat<T>> forward_taps(const nn::Mat<T>& x, bool keep_caches) {
        std::vector<nn::Mat<T>> taps;
        taps.reserve(tap_after_layer_.size());
        nn::Mat<T> h = x;
        size_t next_tap = 0;
        for (size_t li = 0; li < layers_.size(); ++li) {
            h = layers_[li]->forward(h, keep_caches);
            if (next_tap < tap_after_layer_.size() &&
                tap_after_layer_[next_tap] == static_cast<int>(li)) {
                taps.push_back(h);
                ++next_tap;
            }
        }
        return taps;
    }

    // gradients injected at the taps, propagated down to the (grayscale) input
    nn::Mat<T> backward_taps(const std::vector<nn::Mat<T>>& dtaps) {
        if (dtaps.size() != tap_after_layer_.size())
            throw std::invalid_argument("backward_taps: tap count mismatch");
        nn::Mat<T> d = dtaps.back();
        int tap_idx = static_cast<int>(dtaps.size()) - 2;
        for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
            d = layers_[li]->backward(d);
            if (tap_idx >= 0 && tap_after_layer_[tap_idx] == li - 1) {
                d += dtaps[tap_idx];
                --tap_idx;
            }
        }
        if (arch_.in_channels == 1) return d;
        nn::Mat<T> gray = nn::Mat<T>::Zero(d.rows() / arch_.in_channels, d.cols());
        for (int c = 0; c < arch_.in_channels; ++c)
            gray += d.middleRows(static_cast<Eigen::Index>(c) * gray.rows(), gray.rows());
        return gray;
    }

    std::vector<nn::Param<T>*> params() {
        std::vector<nn::Param<T>*> ps;
        for (auto& l : layers_)
            for (auto* p : l->params()) ps.push_back(p);
        return ps;
    }

private:
    static constexpr int kBankKernel = 7;

    // oriented Gabor pairs, two center-surround scales, one lowpass; filters
    // cycle when the block is wider than the canonical 12
    void fill_filter_bank(nn::Conv2d<T>& conv, int in_c, int out_c) {
        constexpr int k = kBankKernel;
        constexpr double ctr = (k - 1) / 2.0;
        auto& w = conv.params()[0]->value;  // out_c x in_c*k*k
        for (int f = 0; f < out_c; ++f) {
            std::vector<double> tap(k * k, 0.0);
            const int kind = f % 12;
            for (int ki = 0; ki < k; ++ki) {
                for (int kj = 0; kj < k; ++kj) {
                    const double y = ki - ctr, x = kj - ctr;
                    const double r2 = x * x + y * y;
                    double v = 0;
                    if (kind < 8) {  // Gabor even/odd at 0/45/90/135 deg
                        const double th = (kind / 2) * M_PI / 4.0;
                        const double lambda = 4.0, sigma = 2.0;
                        const double xr = x * std::cos(th) + y * std::sin(th);
                        const double carrier = 2 * M_PI * xr / lambda;
                        v = std::exp(-r2 / (2 * sigma * sigma)) *
                            (kind % 2 == 0 ? std::cos(carrier) : std::sin(carrier));
                    } else if (kind == 8 || kind == 9) {  // center-surround
                        const double s1 = kind == 8 ? 0.8 : 1.6, s2 = 2 * s1;
                        v = std::exp(-r2 / (2 * s1 * s1)) / (s1 * s1) -
                            std::exp(-r2 / (2 * s2 * s2)) / (s2 * s2);
                    } else if (kind == 10) {  // lowpass
                        v = std::exp(-r2 / (2 * 2.4 * 2.4));
                    } else {  // coarse diagonal Gabor
                        const double xr = (x + y) / std::sqrt(2.0);
                        v = std::exp(-r2 / (2 * 2.8 * 2.8)) * std::cos(2 * M_PI * xr / 7.0);
                    }
                    tap[static_cast<size_t>(ki) * k + kj] = v;
                }
            }
            if (kind != 10) {  // zero mean for the band filters
                double mean = 0;
                for (double v : tap) mean += v;
                mean /= tap.size();
                for (double& v : tap) v -= mean;
            }
            double norm = 0;
            for (double v : tap) norm += v * v;
            norm = std::sqrt(norm);
            for (int ci = 0; ci < in_c; ++ci)
                for (int i = 0; i < k * k; ++i)
                    w(f, ci * k * k + i) =
                        static_cast<T>(tap[static_cast<size_t>(i)] / (norm * in_c));
        }
        conv.params()[1]->value.setZero();
    }

    Arch arch_;
    std::vector<std::unique_ptr<nn::Layer<T>>> layers_;
    std::vector<int> tap_after_layer_;
    std::vector<nn::Shape3> tap_shapes_;
};

// Precomputed alignment targets: gram matrices of the sampled texture and
// raw feature maps of the shape image. Indexed [tap][item] / [tap].
template <class T>
struct TanTargets {
    std::vector<std::vector<Eigen::MatrixXd>> texture_grams;
    std::vector<nn::Mat<T>> shape_features;  // per tap, (C*H'*W') x n_items
};

// Eq-style perceptual loss: sum_i [ w_i*||g_i(T)-g_i(I)||_F + lambda*||F_i(B)-F_i(I)||_F ].
double tan_loss(FeatureExtractor<float>& extractor, const ImageGrid& texture,
                const ImageGrid& shape_image, const ImageGrid& candidate, const TanConfig& cfg);
double tan_loss(FeatureExtractor<double>& extractor, const ImageGrid& texture,
                const ImageGrid& shape_image, const ImageGrid& candidate, const TanConfig& cfg);

// Loss (summed over items) and gradient with respect to the candidate pixels.
template <class T>
double tan_loss_grad(FeatureExtractor<T>& extractor, const TanTargets<T>& targets,
                     const nn::Mat<T>& candidate_cols, const TanConfig& cfg, nn::Mat<T>* dcand,
                     std::vector<double>* per_item = nullptr);

template <class T>
TanTargets<T> make_tan_targets(FeatureExtractor<T>& extractor, const nn::Mat<T>& texture_cols,
                               const nn::Mat<T>& shape_cols, const TanConfig& cfg);

// Assigns a texture sampled from the pool to the synthetic mask by projected
// gradient descent on the candidate pixels; the result is masked to the shape.
ImageGrid align_texture(FeatureExtractor<float>& extractor, const BinaryMask& syn_btc,
                        const std::vector<ImageGrid>& texture_pool, const TanConfig& cfg,
                        RngHandle& rng);

// Batched variant used by the pipeline; one rng draw sequence item-by-item.
// When given, loss_before_after receives each item's loss at the initial and
// final iterate.
std::vector<ImageGrid> align_textures(FeatureExtractor<float>& extractor,
                                      const std::vector<BinaryMask>& syn_btcs,
                                      const std::vector<ImageGrid>& texture_pool,
                                      const TanConfig& cfg, RngHandle& rng, int chunk = 16,
                                      std::vector<std::pair<double, double>>* loss_before_after =
                                          nullptr);

FeatureExtractor<float> make_extractor(const FeatureExtractor<float>::Arch& arch, uint64_t seed);
void save_extractor_checkpoint(FeatureExtractor<float>& extractor, uint64_t seed,
                               const std::filesystem::path& path);
FeatureExtractor<float> load_extractor_checkpoint(const std::filesystem::path& path);

}  // namespace sage
