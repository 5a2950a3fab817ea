#include "sage/tan.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sage/checkpoint.hpp"

namespace sage {

using nn::Mat;
using nn::Shape3;

namespace {

template <class S>
Eigen::MatrixXd gram_impl(Shape3 shape, const S* data) {
    const int C = shape.c;
    const int hw = shape.h * shape.w;
    if (C < 1 || hw < 1) throw std::invalid_argument("gram_matrix: degenerate feature map");
    const double norm = static_cast<double>(shape.size());
    Eigen::MatrixXd g(C, C);
    for (int a = 0; a < C; ++a) {
        const S* fa = data + static_cast<size_t>(a) * hw;
        for (int b = a; b < C; ++b) {
            const S* fb = data + static_cast<size_t>(b) * hw;
            double acc = 0;
            for (int p = 0; p < hw; ++p) acc += static_cast<double>(fa[p]) * static_cast<double>(fb[p]);
            acc /= norm;
            g(a, b) = acc;
            g(b, a) = acc;  // assigned from the same accumulator: exactly symmetric
        }
    }
    return g;
}

}  // namespace

Eigen::MatrixXd gram_matrix(Shape3 shape, const double* data) { return gram_impl(shape, data); }
Eigen::MatrixXd gram_matrix(Shape3 shape, const float* data) { return gram_impl(shape, data); }

void TanConfig::validate(size_t tap_count, bool require_style) const {
    if (layer_weights.size() != tap_count)
        throw std::invalid_argument("TanConfig: need one layer weight per tapped stage");
    bool any = false;
    for (double w : layer_weights) {
        if (w < 0) throw std::invalid_argument("TanConfig: layer weights must be nonnegative");
        if (w > 0) any = true;
    }
    if (require_style && !any)
        throw std::invalid_argument("TanConfig: at least one layer weight must be positive");
    if (content_weight < 0) throw std::invalid_argument("TanConfig: content weight must be >= 0");
    if (steps < 0) throw std::invalid_argument("TanConfig: negative step budget");
    if (step_size <= 0) throw std::invalid_argument("TanConfig: step size must be positive");
}

template <class T>
TanTargets<T> make_tan_targets(FeatureExtractor<T>& extractor, const Mat<T>& texture_cols,
                               const Mat<T>& shape_cols, const TanConfig& cfg) {
    cfg.validate(extractor.tap_count(), /*require_style=*/false);
    TanTargets<T> t;
    auto taps_tex = extractor.forward_taps(extractor.lift_input(texture_cols), false);
    t.shape_features = extractor.forward_taps(extractor.lift_input(shape_cols), false);
    t.texture_grams.resize(taps_tex.size());
    for (size_t i = 0; i < taps_tex.size(); ++i) {
        const Shape3 s = extractor.tap_shapes()[i];
        for (Eigen::Index j = 0; j < taps_tex[i].cols(); ++j)
            t.texture_grams[i].push_back(gram_matrix(s, taps_tex[i].col(j).data()));
    }
    return t;
}

template <class T>
double tan_loss_grad(FeatureExtractor<T>& extractor, const TanTargets<T>& targets,
                     const Mat<T>& candidate_cols, const TanConfig& cfg, Mat<T>* dcand,
                     std::vector<double>* per_item) {
    cfg.validate(extractor.tap_count(), /*require_style=*/false);
    const int n = static_cast<int>(candidate_cols.cols());
    auto taps = extractor.forward_taps(extractor.lift_input(candidate_cols), dcand != nullptr);
    if (per_item) per_item->assign(static_cast<size_t>(n), 0.0);

    std::vector<Mat<T>> dtaps;
    if (dcand) {
        dtaps.reserve(taps.size());
        for (auto& m : taps) dtaps.push_back(Mat<T>::Zero(m.rows(), m.cols()));
    }

    constexpr double kEps = 1e-12;
    double total = 0;
    for (size_t i = 0; i < taps.size(); ++i) {
        const Shape3 s = extractor.tap_shapes()[i];
        const int C = s.c, hw = s.h * s.w;
        const double N = static_cast<double>(s.size());
        const double wi = cfg.layer_weights[i];
        for (int j = 0; j < n; ++j) {
            using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
            RowMat F(C, hw);
            {
                const T* src = taps[i].col(j).data();
                for (int a = 0; a < C; ++a)
                    for (int p = 0; p < hw; ++p)
                        F(a, p) = static_cast<double>(src[static_cast<size_t>(a) * hw + p]);
            }
            RowMat dF = RowMat::Zero(C, hw);
            double item_loss = 0;

            if (wi > 0) {
                Eigen::MatrixXd g = gram_matrix(s, taps[i].col(j).data());
                Eigen::MatrixXd delta = g - targets.texture_grams[i][j];  // G_I - G_T
                const double norm = delta.norm();
                if (cfg.squared_norms) {
                    item_loss += wi * norm * norm;
                    if (dcand) dF.noalias() += (2.0 * wi * 2.0 / N) * (delta * F);
                } else {
                    item_loss += wi * norm;
                    if (dcand && norm > kEps)
                        dF.noalias() += (wi / norm * 2.0 / N) * (delta * F);
                }
            }
            if (cfg.content_weight > 0) {
                RowMat Fb(C, hw);
                const T* src = targets.shape_features[i].col(j).data();
                for (int a = 0; a < C; ++a)
                    for (int p = 0; p < hw; ++p)
                        Fb(a, p) = static_cast<double>(src[static_cast<size_t>(a) * hw + p]);
                RowMat dc = F - Fb;
                const double norm = dc.norm();
                if (cfg.squared_norms) {
                    item_loss += cfg.content_weight * norm * norm;
                    if (dcand) dF.noalias() += (2.0 * cfg.content_weight) * dc;
                } else {
                    item_loss += cfg.content_weight * norm;
                    if (dcand && norm > kEps) dF.noalias() += (cfg.content_weight / norm) * dc;
                }
            }

            total += item_loss;
            if (per_item) (*per_item)[static_cast<size_t>(j)] += item_loss;
            if (dcand) {
                T* dst = dtaps[i].col(j).data();
                for (int a = 0; a < C; ++a)
                    for (int p = 0; p < hw; ++p)
                        dst[static_cast<size_t>(a) * hw + p] = static_cast<T>(dF(a, p));
            }
        }
    }
    if (dcand) *dcand = extractor.backward_taps(dtaps);
    return total;
}

namespace {

template <class T>
double tan_loss_impl(FeatureExtractor<T>& extractor, const ImageGrid& texture,
                     const ImageGrid& shape_image, const ImageGrid& candidate,
                     const TanConfig& cfg) {
    const int S = extractor.arch().input_size;
    auto prep = [&](const ImageGrid& img) {
        return image_to_column<T>(img.height == S && img.width == S ? img
                                                                    : resize_bilinear(img, S, S));
    };
    Mat<T> tex = prep(texture), shp = prep(shape_image), cand = prep(candidate);
    TanTargets<T> targets = make_tan_targets(extractor, tex, shp, cfg);
    return tan_loss_grad<T>(extractor, targets, cand, cfg, nullptr);
}

}  // namespace

double tan_loss(FeatureExtractor<float>& extractor, const ImageGrid& texture,
                const ImageGrid& shape_image, const ImageGrid& candidate, const TanConfig& cfg) {
    return tan_loss_impl(extractor, texture, shape_image, candidate, cfg);
}

double tan_loss(FeatureExtractor<double>& extractor, const ImageGrid& texture,
                const ImageGrid& shape_image, const ImageGrid& candidate, const TanConfig& cfg) {
    return tan_loss_impl(extractor, texture, shape_image, candidate, cfg);
}

std::vector<ImageGrid> align_textures(FeatureExtractor<float>& extractor,
                                      const std::vector<BinaryMask>& syn_btcs,
                                      const std::vector<ImageGrid>& texture_pool,
                                      const TanConfig& cfg, RngHandle& rng, int chunk,
                                      std::vector<std::pair<double, double>>* loss_before_after) {
    cfg.validate(extractor.tap_count());
    if (texture_pool.empty()) throw std::invalid_argument("align_texture: empty texture pool");
    const int S = extractor.arch().input_size;
    const int HW = S * S;
    for (const auto& m : syn_btcs) {
        if (m.height != S || m.width != S)
            throw std::invalid_argument("align_texture: mask size must match the extractor input");
        if (m.foreground_count() == 0)
            throw std::invalid_argument("align_texture: empty synthetic mask");
    }

    // per-item draws happen first, in item order
    const int n = static_cast<int>(syn_btcs.size());
    std::vector<int> tex_idx(static_cast<size_t>(n));
    Mat<float> init(HW, n);
    for (int j = 0; j < n; ++j) {
        tex_idx[static_cast<size_t>(j)] = static_cast<int>(rng.uniform_int(
            static_cast<int64_t>(texture_pool.size())));
        nn::Vec<float> col = image_to_column<float>(syn_btcs[static_cast<size_t>(j)].to_image());
        if (cfg.init == TanConfig::Init::content_plus_noise) {
            for (int i = 0; i < HW; ++i)
                col[i] = std::clamp(
                    static_cast<float>(col[i] * cfg.init_mid_level +
                                       rng.normal(0, cfg.init_noise_sigma)),
                    0.0f, 1.0f);
        }
        init.col(j) = col;
    }

    std::vector<ImageGrid> out(static_cast<size_t>(n));
    if (loss_before_after) loss_before_after->assign(static_cast<size_t>(n), {0.0, 0.0});
    for (int lo = 0; lo < n; lo += chunk) {
        const int b = std::min(chunk, n - lo);
        Mat<float> tex_cols(HW, b), shape_cols(HW, b), cand(HW, b);
        for (int j = 0; j < b; ++j) {
            const ImageGrid& tex = texture_pool[static_cast<size_t>(tex_idx[lo + j])];
            tex_cols.col(j) = image_to_column<float>(
                tex.height == S && tex.width == S ? tex : resize_bilinear(tex, S, S));
            shape_cols.col(j) = image_to_column<float>(syn_btcs[static_cast<size_t>(lo + j)].to_image());
            cand.col(j) = init.col(lo + j);
        }
        TanTargets<float> targets = make_tan_targets(extractor, tex_cols, shape_cols, cfg);
        const float step = static_cast<float>(cfg.step_size);
        std::vector<double> per_item;
        if (loss_before_after) {
            tan_loss_grad<float>(extractor, targets, cand, cfg, nullptr, &per_item);
            for (int j = 0; j < b; ++j)
                (*loss_before_after)[static_cast<size_t>(lo + j)].first = per_item[static_cast<size_t>(j)];
        }
        for (int it = 0; it < cfg.steps; ++it) {
            Mat<float> d;
            const double loss = tan_loss_grad<float>(extractor, targets, cand, cfg, &d);
            if (!std::isfinite(loss))
                throw std::runtime_error("align_texture: non-finite loss (step size too large?)");
            cand = (cand - step * d).cwiseMax(0.0f).cwiseMin(1.0f);
        }
        if (loss_before_after) {
            tan_loss_grad<float>(extractor, targets, cand, cfg, nullptr, &per_item);
            for (int j = 0; j < b; ++j)
                (*loss_before_after)[static_cast<size_t>(lo + j)].second = per_item[static_cast<size_t>(j)];
        }
        for (int j = 0; j < b; ++j) {
            ImageGrid img = column_to_image<float>(cand.col(j), S, S);
            const BinaryMask& mask = syn_btcs[static_cast<size_t>(lo + j)];
            for (size_t i = 0; i < img.pixels.size(); ++i)
                if (!mask.pixels[i]) img.pixels[i] = 0.0;
            out[static_cast<size_t>(lo + j)] = std::move(img);
        }
    }
    return out;
}

ImageGrid align_texture(FeatureExtractor<float>& extractor, const BinaryMask& syn_btc,
                        const std::vector<ImageGrid>& texture_pool, const TanConfig& cfg,
                        RngHandle& rng) {
    return align_textures(extractor, {syn_btc}, texture_pool, cfg, rng, 1)[0];
}

FeatureExtractor<float> make_extractor(const FeatureExtractor<float>::Arch& arch, uint64_t seed) {
    return FeatureExtractor<float>(arch, RngHandle(seed, "extractor"));
}

void save_extractor_checkpoint(FeatureExtractor<float>& extractor, uint64_t seed,
                               const std::filesystem::path& path) {
    const auto& a = extractor.arch();
    nlohmann::json header{{"input_size", a.input_size},
                          {"in_channels", a.in_channels},
                          {"widths", a.widths},
                          {"convs_per_block", a.convs_per_block},
                          {"tap_blocks", a.tap_blocks},
                          {"pool_after", a.pool_after},
                          {"front_end",
                           a.front_end == FeatureExtractor<float>::FrontEnd::filter_bank
                               ? "filter_bank"
                               : "random"},
                          {"seed", seed}};
    save_checkpoint(path, "extractor", header,
                    [&](std::ostream& out) { nn::write_params(out, extractor.params()); });
}

FeatureExtractor<float> load_extractor_checkpoint(const std::filesystem::path& path) {
    std::ifstream in;
    nlohmann::json h = open_checkpoint(in, path, "extractor");
    FeatureExtractor<float>::Arch arch;
    arch.input_size = h.at("input_size").get<int>();
    arch.in_channels = h.at("in_channels").get<int>();
    arch.widths = h.at("widths").get<std::vector<int>>();
    arch.convs_per_block = h.at("convs_per_block").get<std::vector<int>>();
    arch.tap_blocks = h.at("tap_blocks").get<std::vector<int>>();
    arch.pool_after = h.at("pool_after").get<std::vector<int>>();
    arch.front_end = h.at("front_end").get<std::string>() == "filter_bank"
                         ? FeatureExtractor<float>::FrontEnd::filter_bank
                         : FeatureExtractor<float>::FrontEnd::random;
    FeatureExtractor<float> ext(arch, RngHandle(0, "extractor-load"));
    nn::read_params(in, ext.params());
    return ext;
}

// explicit instantiations: float for production, double for gradient checks
template TanTargets<float> make_tan_targets<float>(FeatureExtractor<float>&, const Mat<float>&,
                                                   const Mat<float>&, const TanConfig&);
template TanTargets<double> make_tan_targets<double>(FeatureExtractor<double>&, const Mat<double>&,
                                                     const Mat<double>&, const TanConfig&);
template double tan_loss_grad<float>(FeatureExtractor<float>&, const TanTargets<float>&,
                                     const Mat<float>&, const TanConfig&, Mat<float>*,
                                     std::vector<double>*);
template double tan_loss_grad<double>(FeatureExtractor<double>&, const TanTargets<double>&,
                                      const Mat<double>&, const TanConfig&, Mat<double>*,
                                      std::vector<double>*);

}  // namespace sage
