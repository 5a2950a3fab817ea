#include "sage/merge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sage/imgproc.hpp"
#include "sage/pgm.hpp"

namespace sage {

void AttributeStats::validate() const {
    for (const MeanStd* m : {&center_row, &center_col, &rel_size, &rotation_deg})
        if (m->std < 0) throw std::invalid_argument("AttributeStats: negative std");
    for (const MeanStd* m : {&center_row, &center_col})
        if (!(m->mean >= 0.0 && m->mean <= 1.0))
            throw std::invalid_argument("AttributeStats: center mean outside [0,1]");
    const bool any_spread = center_row.std > 0 || center_col.std > 0 || rel_size.std > 0 ||
                            rotation_deg.std > 0;
    if (any_spread && sample_count < 2)
        throw std::invalid_argument("AttributeStats: nonzero std requires at least 2 samples");
}

namespace {

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) out.mean += x;
    out.mean /= n;
    if (xs.size() >= 2) {
        double acc = 0;
        for (double x : xs) acc += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(acc / (n - 1.0));
    }
    return out;
}

}  // namespace

AttributeStats estimate_stats(const DatasetManifest& manifest, ClassLabel label) {
    std::vector<double> rows, cols, sizes, angles;
    for (const auto& e : manifest.select(label, Role::shape_mask)) {
        if (!e.crop) continue;
        BinaryMask mask = load_mask_pgm(manifest.resolve(e));
        if (mask.foreground_count() == 0) continue;
        rows.push_back(e.crop->center_row);
        cols.push_back(e.crop->center_col);
        sizes.push_back(static_cast<double>(mask.foreground_count()) /
                        (static_cast<double>(mask.height) * mask.width) * e.crop->crop_h *
                        e.crop->crop_w);
        angles.push_back(principal_angle_deg(mask));
    }
    if (rows.size() < 2)
        throw std::runtime_error("estimate_stats: need at least 2 " + to_string(label) +
                                 " tumor crops with crop geometry, found " +
                                 std::to_string(rows.size()));
    AttributeStats stats;
    stats.label = label;
    stats.center_row = mean_std(rows);
    stats.center_col = mean_std(cols);
    stats.rel_size = mean_std(sizes);
    stats.rotation_deg = mean_std(angles);
    stats.sample_count = static_cast<int>(rows.size());
    stats.validate();
    return stats;
}

namespace {

// conservative linear extent of a tumor of relative area `rel` after an
// arbitrary rotation (bounding-box slack times sqrt2)
double extent_estimate(double rel_size) { return 2.4 * std::sqrt(std::max(rel_size, 0.0)); }

}  // namespace

PlacementSample sample_placement(const AttributeStats& stats, double k, RngHandle& rng,
                                 double taper_sigma) {
    if (k <= 0) throw std::invalid_argument("sample_placement: k must be positive");
    stats.validate();

    auto draw = [&](const MeanStd& m) { return rng.uniform(m.mean - k * m.std, m.mean + k * m.std); };

    PlacementSample p;
    p.taper_sigma = taper_sigma;
    p.center_row = draw(stats.center_row);
    p.center_col = draw(stats.center_col);
    p.rel_size = draw(stats.rel_size);
    p.rotation_deg = draw(stats.rotation_deg);

    const double rel_lo = std::max(stats.rel_size.mean - k * stats.rel_size.std, 1e-4);
    if (extent_estimate(rel_lo) > 1.0)
        throw std::runtime_error("sample_placement: tumor size range cannot fit inside the image");
    const double rel_hi = std::min(stats.rel_size.mean + k * stats.rel_size.std,
                                   1.0 / (2.4 * 2.4));
    p.rel_size = std::clamp(p.rel_size, rel_lo, rel_hi);

    const double half = extent_estimate(p.rel_size) / 2.0;
    p.center_row = std::clamp(p.center_row, half, 1.0 - half);
    p.center_col = std::clamp(p.center_col, half, 1.0 - half);
    return p;
}

BinaryMask phi_foreground(const ImageGrid& phi) {
    return morphological_close(binarize(phi, otsu_threshold(phi)), 2);
}

MergeResult merge_detailed(const ImageGrid& syn_tc, const BinaryMask& syn_btc,
                           const ImageGrid& phi, const PlacementSample& placement) {
    if (syn_tc.height != syn_btc.height || syn_tc.width != syn_btc.width)
        throw std::invalid_argument("merge: tumor crop and mask sizes differ");
    if (!(placement.rel_size >= 0)) throw std::invalid_argument("merge: negative relative size");

    MergeResult result;
    result.placed_mask = BinaryMask(phi.height, phi.width);
    if (syn_btc.foreground_count() == 0) {  // alpha is identically zero
        result.image = phi;
        return result;
    }

    // scale so that (mask area / slice area) hits the sampled relative size
    const double target_fg = placement.rel_size * phi.height * phi.width;
    const double scale = std::sqrt(target_fg / syn_btc.foreground_count());
    const int sh = std::max(1, static_cast<int>(std::lround(syn_tc.height * scale)));
    const int sw = std::max(1, static_cast<int>(std::lround(syn_tc.width * scale)));
    ImageGrid tc_scaled = resize_bilinear(syn_tc, sh, sw);
    ImageGrid mask_scaled = resize_bilinear(syn_btc.to_image(), sh, sw);

    ImageGrid tc_rot = rotate_expand(tc_scaled, placement.rotation_deg);
    ImageGrid mask_rot = rotate_expand(mask_scaled, placement.rotation_deg);
    BinaryMask mask_bin = binarize(mask_rot, 0.5);

    // pad by the taper radius so the feathered edge survives; the radius is
    // capped at 4*sigma, which is what keeps the locality guarantee
    const double sigma = placement.taper_sigma;
    const int radius =
        sigma > 0 ? std::min(default_blur_radius(sigma), static_cast<int>(4.0 * sigma)) : 0;
    const int ch = mask_bin.height + 2 * radius;
    const int cw = mask_bin.width + 2 * radius;
    if (ch > phi.height || cw > phi.width)
        throw std::runtime_error("merge: scaled tumor does not fit inside the image");

    ImageGrid alpha_base(ch, cw, 0.0);
    ImageGrid tc_canvas(ch, cw, 0.0);
    for (int r = 0; r < mask_bin.height; ++r)
        for (int c = 0; c < mask_bin.width; ++c) {
            alpha_base.at(r + radius, c + radius) = mask_bin.at(r, c) ? 1.0 : 0.0;
            tc_canvas.at(r + radius, c + radius) = tc_rot.at(r, c);
        }
    ImageGrid alpha = gaussian_blur(alpha_base, sigma, radius);

    // normalized center -> pixel; clip so the canvas stays inside the slice
    double pr = placement.center_row * phi.height - 0.5;
    double pc = placement.center_col * phi.width - 0.5;
    int tl_r = static_cast<int>(std::lround(pr - (ch - 1) / 2.0));
    int tl_c = static_cast<int>(std::lround(pc - (cw - 1) / 2.0));
    tl_r = std::clamp(tl_r, 0, phi.height - ch);
    tl_c = std::clamp(tl_c, 0, phi.width - cw);

    const int center_r = std::clamp(tl_r + ch / 2, 0, phi.height - 1);
    const int center_c = std::clamp(tl_c + cw / 2, 0, phi.width - 1);
    BinaryMask fg = phi_foreground(phi);
    if (!fg.at(center_r, center_c))
        throw std::runtime_error("merge: placement is outside the brain foreground");

    result.image = phi;
    for (int r = 0; r < ch; ++r)
        for (int c = 0; c < cw; ++c) {
            const double a = alpha.at(r, c);
            if (a <= 0.0) continue;
            double& px = result.image.at(tl_r + r, tl_c + c);
            px = std::clamp(a * tc_canvas.at(r, c) + (1.0 - a) * px, 0.0, 1.0);
        }
    for (int r = 0; r < mask_bin.height; ++r)
        for (int c = 0; c < mask_bin.width; ++c)
            if (mask_bin.at(r, c))
                result.placed_mask.at(tl_r + radius + r, tl_c + radius + c) = 1;
    return result;
}

ImageGrid merge(const ImageGrid& syn_tc, const BinaryMask& syn_btc, const ImageGrid& phi,
                const PlacementSample& placement) {
    return merge_detailed(syn_tc, syn_btc, phi, placement).image;
}

void save_stats(const std::vector<AttributeStats>& stats, const std::filesystem::path& path) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& s : stats) {
        auto ms = [](const MeanStd& m) {
            return nlohmann::json{{"mean", m.mean}, {"std", m.std}};
        };
        classes.push_back({{"class_label", to_string(s.label)},
                           {"center_row", ms(s.center_row)},
                           {"center_col", ms(s.center_col)},
                           {"rel_size", ms(s.rel_size)},
                           {"rotation_deg", ms(s.rotation_deg)},
                           {"sample_count", s.sample_count}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_stats: cannot open " + path.string());
    out << nlohmann::json{{"classes", classes}}.dump(2) << "\n";
}

std::vector<AttributeStats> load_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_stats: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    std::vector<AttributeStats> out;
    for (const auto& c : j.at("classes")) {
        auto ms = [&](const char* key) {
            return MeanStd{c.at(key).at("mean").get<double>(), c.at(key).at("std").get<double>()};
        };
        AttributeStats s;
        s.label = class_label_from_string(c.at("class_label").get<std::string>());
        s.center_row = ms("center_row");
        s.center_col = ms("center_col");
        s.rel_size = ms("rel_size");
        s.rotation_deg = ms("rotation_deg");
        s.sample_count = c.at("sample_count").get<int>();
        s.validate();
        out.push_back(s);
    }
    return out;
}

}  // namespace sage
