#include "sage/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "sage/imgproc.hpp"
#include "sage/pgm.hpp"

namespace sage {

namespace {

struct Wave {
    double fr, fc, phase, amp;
};

struct HeadParams {
    double cr, cc;       // center, px
    double ry, rx;       // radii, px
    double rot_rad;
    double base;
    std::vector<Wave> waves;
    double vent_off, vent_r;  // ventricle lobes
};

HeadParams sample_head(RngHandle rng, int S) {
    HeadParams h;
    h.cr = S * (0.5 + rng.uniform(-0.015, 0.015));
    h.cc = S * (0.5 + rng.uniform(-0.015, 0.015));
    h.ry = S * (0.34 + rng.uniform(-0.02, 0.02));
    h.rx = S * (0.30 + rng.uniform(-0.02, 0.02));
    h.rot_rad = rng.uniform(-0.14, 0.14);
    h.base = 0.42 + rng.uniform(-0.03, 0.03);
    const int n_waves = 6;
    for (int i = 0; i < n_waves; ++i) {
        Wave w;
        w.fr = rng.uniform(0.5, 2.5) / S;
        w.fc = rng.uniform(0.5, 2.5) / S;
        if (rng.bernoulli(0.5)) w.fr = -w.fr;
        w.phase = rng.uniform(0, 2 * M_PI);
        w.amp = rng.uniform(0.02, 0.055);
        h.waves.push_back(w);
    }
    h.vent_off = S * rng.uniform(0.05, 0.08);
    h.vent_r = S * rng.uniform(0.035, 0.055);
    return h;
}

// Per-image render of one patient's background field; `rng` carries the
// slice-to-slice variation (phase drift + sensor noise).
ImageGrid render_background(const HeadParams& h, int S, RngHandle rng) {
    std::vector<double> dphase(h.waves.size()), damp(h.waves.size());
    for (size_t i = 0; i < h.waves.size(); ++i) {
        dphase[i] = rng.uniform(-0.35, 0.35);
        damp[i] = 1.0 + rng.uniform(-0.08, 0.08);
    }
    const double ct = std::cos(h.rot_rad), st = std::sin(h.rot_rad);
    ImageGrid img(S, S);
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            const double dr = r - h.cr, dc = c - h.cc;
            const double y = ct * dr - st * dc, x = st * dr + ct * dc;
            const double d = std::sqrt((y * y) / (h.ry * h.ry) + (x * x) / (h.rx * h.rx));
            double v;
            if (d >= 1.04) {
                v = 0.015 + std::abs(rng.normal(0, 0.008));
            } else {
                double field = h.base;
                for (size_t i = 0; i < h.waves.size(); ++i)
                    field += h.waves[i].amp * damp[i] *
                             std::cos(2 * M_PI * (h.waves[i].fr * r + h.waves[i].fc * c) +
                                      h.waves[i].phase + dphase[i]);
                // ventricle lobes
                for (int sgn : {-1, 1}) {
                    const double vr = h.cr - h.vent_off * 0.3, vc = h.cc + sgn * h.vent_off;
                    const double dd = std::hypot(r - vr, c - vc) / h.vent_r;
                    if (dd < 1.6) field -= 0.18 * std::exp(-dd * dd);
                }
                // bright cortex rim
                if (d > 0.82) field += 0.12 * std::exp(-std::pow((d - 0.94) / 0.05, 2));
                // feather across the skull boundary
                if (d > 0.96) {
                    const double t = std::clamp((1.04 - d) / 0.08, 0.0, 1.0);
                    field = field * t * t * (3 - 2 * t) + 0.015 * (1 - t);
                }
                v = field + rng.normal(0, 0.012);
            }
            img.at(r, c) = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

void keep_largest_component(BinaryMask& mask) {
    std::vector<int> label(mask.size(), 0);
    int next = 0, best_label = 0, best_size = 0;
    std::deque<std::pair<int, int>> queue;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            const size_t idx = static_cast<size_t>(r) * mask.width + c;
            if (!mask.pixels[idx] || label[idx]) continue;
            ++next;
            int size = 0;
            label[idx] = next;
            queue.emplace_back(r, c);
            while (!queue.empty()) {
                auto [cr, cc] = queue.front();
                queue.pop_front();
                ++size;
                constexpr int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
                for (int i = 0; i < 4; ++i) {
                    int nr = cr + dr[i], nc = cc + dc[i];
                    if (nr < 0 || nc < 0 || nr >= mask.height || nc >= mask.width) continue;
                    const size_t nidx = static_cast<size_t>(nr) * mask.width + nc;
                    if (mask.pixels[nidx] && !label[nidx]) {
                        label[nidx] = next;
                        queue.emplace_back(nr, nc);
                    }
                }
            }
            if (size > best_size) {
                best_size = size;
                best_label = next;
            }
        }
    }
    if (next <= 1) return;
    for (size_t i = 0; i < mask.size(); ++i)
        mask.pixels[i] = label[i] == best_label ? 1 : 0;
}

struct TumorPatch {
    ImageGrid tex;    // crop_size x crop_size, 0 outside mask
    BinaryMask mask;  // crop_size x crop_size
    int extent = 0;   // slice-pixel footprint when composited
};

// Fourier-perturbed rotated ellipse filled with band-pass noise, rasterized
// directly at crop resolution so the texture band (the class signal) is not
// confounded by the crop's slice footprint. The class feature lives in the
// band center (sigma_lo) and the boundary harmonic amplitude, both scaled by
// `strength`.
TumorPatch render_tumor_patch(RngHandle shape_rng, RngHandle tex_rng, ClassLabel label,
                              double strength, int slice_size, int crop_size,
                              double rel_area_mean, double rel_area_std, double rel_area_min,
                              double rel_area_max) {
    const int S = slice_size;
    const int cs = crop_size;
    const double rel = std::clamp(shape_rng.normal(rel_area_mean, rel_area_std), rel_area_min,
                                  rel_area_max);
    const double ecc = shape_rng.uniform(1.15, 1.9);
    const double theta = shape_rng.uniform(-60.0, 60.0) * M_PI / 180.0;
    // the mask fills a roughly fixed fraction of the crop; the sampled area
    // enters through the slice footprint below
    const double a = cs * 0.31 * shape_rng.uniform(0.92, 1.04);
    const double b = a / ecc;

    const double rough = 0.06 + (label == ClassLabel::mutated ? 0.10 * strength : 0.0);
    constexpr int kHarmonics = 8;
    std::vector<double> amp(kHarmonics + 1, 0.0), phase(kHarmonics + 1, 0.0);
    for (int k = 2; k <= kHarmonics; ++k) {
        amp[k] = shape_rng.normal(0.0, rough / std::pow(k, 1.1));
        phase[k] = shape_rng.uniform(0, 2 * M_PI);
    }

    const double ctr = (cs - 1) / 2.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    BinaryMask mask(cs, cs);
    for (int r = 0; r < cs; ++r) {
        for (int c = 0; c < cs; ++c) {
            const double dc = c - ctr, dr = r - ctr;
            const double x = ct * dc + st * dr;  // canonical frame
            const double y = -st * dc + ct * dr;
            const double phi = std::atan2(y / b, x / a);
            double f = 1.0;
            for (int k = 2; k <= kHarmonics; ++k) f += amp[k] * std::cos(k * phi + phase[k]);
            f = std::clamp(f, 0.5, 1.45);
            const double rho2 = (x * x) / (a * a) + (y * y) / (b * b);
            if (rho2 <= f * f) mask.at(r, c) = 1;
        }
    }
    keep_largest_component(mask);
    const int fg = mask.foreground_count();
    if (fg == 0) throw std::logic_error("phantom: tumor rasterized to an empty mask");

    // band-pass interior texture at crop resolution; class signal = band center
    const double sigma_lo =
        label == ClassLabel::mutated ? std::max(1.2, 4.8 - 3.4 * strength) : 4.8;
    const double sigma_hi = 2.0 * sigma_lo;
    ImageGrid noise(cs, cs);
    for (double& v : noise.pixels) v = tex_rng.normal(0, 1) * 0.1 + 0.5;
    noise.clamp01();
    ImageGrid lo = gaussian_blur(noise, sigma_lo, default_blur_radius(sigma_lo));
    ImageGrid hi = gaussian_blur(noise, sigma_hi, default_blur_radius(sigma_hi));

    double mean = 0, sq = 0;
    for (int i = 0; i < cs * cs; ++i) {
        if (!mask.pixels[i]) continue;
        const double v = lo.pixels[i] - hi.pixels[i];
        mean += v;
        sq += v * v;
    }
    mean /= fg;
    const double stddev = std::sqrt(std::max(sq / fg - mean * mean, 1e-12));

    const double brightness = 0.55 + tex_rng.uniform(-0.03, 0.03);
    ImageGrid tex(cs, cs, 0.0);
    for (int r = 0; r < cs; ++r) {
        for (int c = 0; c < cs; ++c) {
            if (!mask.at(r, c)) continue;
            const double band = (lo.at(r, c) - hi.at(r, c) - mean) / stddev;
            const double dc = c - ctr, dr = r - ctr;
            const double rho2 = (dc * dc + dr * dr) / (a * a);
            const double shade = 0.08 * std::max(0.0, 1.0 - rho2);
            tex.at(r, c) = std::clamp(brightness + 0.17 * band + shade, 0.05, 1.0);
        }
    }

    // slice footprint so that (placed area / slice area) = rel
    const double fill = static_cast<double>(fg) / (static_cast<double>(cs) * cs);
    int extent = static_cast<int>(std::lround(S * std::sqrt(rel / fill)));
    extent = std::clamp(extent, 10, static_cast<int>(0.45 * S));

    return {std::move(tex), std::move(mask), extent};
}

}  // namespace

void PhantomSpec::validate() const {
    if (patients_per_class <= 0 || images_per_patient <= 0)
        throw std::invalid_argument("PhantomSpec: counts must be positive");
    if (crop_size >= image_size)
        throw std::invalid_argument("PhantomSpec: crop_size must be smaller than image_size");
    if (crop_size < 8) throw std::invalid_argument("PhantomSpec: crop_size below 8");
    if (!(class_feature_strength >= 0.0 && class_feature_strength <= 1.0))
        throw std::invalid_argument("PhantomSpec: class_feature_strength outside [0,1]");
}

std::pair<ImageGrid, BinaryMask> phantom_tumor(RngHandle shape_rng, RngHandle texture_rng,
                                               ClassLabel label, double strength, int crop_size) {
    PhantomSpec defaults;
    TumorPatch patch = render_tumor_patch(
        std::move(shape_rng), std::move(texture_rng), label, strength, defaults.image_size,
        crop_size, defaults.rel_area_mean, defaults.rel_area_std, defaults.rel_area_min,
        defaults.rel_area_max);
    return {std::move(patch.tex), std::move(patch.mask)};
}

DatasetManifest generate_phantom_dataset(const PhantomSpec& spec,
                                         const std::filesystem::path& out_dir, RngHandle rng) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    const int S = spec.image_size;

    DatasetManifest manifest;
    manifest.root = out_dir;

    for (ClassLabel label : {ClassLabel::control, ClassLabel::mutated}) {
        const std::string label_str = to_string(label);
        for (int p = 0; p < spec.patients_per_class; ++p) {
            char pid_buf[32];
            std::snprintf(pid_buf, sizeof(pid_buf), "%s_p%02d", label_str.c_str(), p);
            const std::string pid = pid_buf;
            RngHandle patient_rng = rng.fork(label_str + "/p" + std::to_string(p));
            const HeadParams head = sample_head(patient_rng.fork("head"), S);
            const std::filesystem::path pdir = out_dir / label_str / pid;
            std::filesystem::create_directories(pdir);

            for (int i = 0; i < spec.images_per_patient; ++i) {
                const std::string si = std::to_string(i);
                ImageGrid bg = render_background(head, S, patient_rng.fork("bg/" + si));
                ImageGrid phi = render_background(head, S, patient_rng.fork("phibg/" + si));
                TumorPatch patch = render_tumor_patch(
                    patient_rng.fork("shape/" + si), patient_rng.fork("tex/" + si), label,
                    spec.class_feature_strength, S, spec.crop_size, spec.rel_area_mean,
                    spec.rel_area_std, spec.rel_area_min, spec.rel_area_max);

                // place the slice-resolution footprint inside the head
                RngHandle place_rng = patient_rng.fork("place/" + si);
                const int E = patch.extent;
                const double margin = E / 2.0 + 3.0;
                const double sry = std::max(head.ry * 0.86 - margin, 2.0);
                const double srx = std::max(head.rx * 0.86 - margin, 2.0);
                double u, v;
                do {
                    u = place_rng.uniform(-1.0, 1.0);
                    v = place_rng.uniform(-1.0, 1.0);
                } while (u * u + v * v > 1.0);
                int tl_r = static_cast<int>(std::lround(head.cr + u * sry - E / 2.0));
                int tl_c = static_cast<int>(std::lround(head.cc + v * srx - E / 2.0));
                tl_r = std::clamp(tl_r, 1, S - E - 1);
                tl_c = std::clamp(tl_c, 1, S - E - 1);

                // feathered paste of the downsampled tumor onto the slice
                ImageGrid tex_e = resize_bilinear(patch.tex, E, E);
                ImageGrid mask_e = resize_bilinear(patch.mask.to_image(), E, E);
                ImageGrid slice = bg;
                ImageGrid alpha = gaussian_blur(mask_e, 1.0, 3);
                for (int r = 0; r < E; ++r)
                    for (int c = 0; c < E; ++c) {
                        const double al = std::min(alpha.at(r, c), 1.0);
                        if (al <= 0.0) continue;
                        double& px = slice.at(tl_r + r, tl_c + c);
                        px = std::clamp(al * tex_e.at(r, c) + (1 - al) * px, 0.0, 1.0);
                    }

                const ImageGrid& tc = patch.tex;
                const BinaryMask& btc = patch.mask;

                CropGeometry geom;
                geom.center_row = (tl_r + (E - 1) / 2.0 + 0.5) / S;
                geom.center_col = (tl_c + (E - 1) / 2.0 + 0.5) / S;
                geom.crop_h = static_cast<double>(E) / S;
                geom.crop_w = static_cast<double>(E) / S;

                const std::string rel = label_str + "/" + pid + "/";
                save_pgm(slice, out_dir / (rel + "slice_" + si + ".pgm"));
                save_pgm(tc, out_dir / (rel + "tc_" + si + ".pgm"));
                save_mask_pgm(btc, out_dir / (rel + "btc_" + si + ".pgm"));
                save_pgm(phi, out_dir / (rel + "phi_" + si + ".pgm"));

                manifest.entries.push_back(
                    {pid, label, Role::whole_slice, rel + "slice_" + si + ".pgm", std::nullopt});
                manifest.entries.push_back(
                    {pid, label, Role::tumor_crop, rel + "tc_" + si + ".pgm", geom});
                manifest.entries.push_back(
                    {pid, label, Role::shape_mask, rel + "btc_" + si + ".pgm", geom});
                manifest.entries.push_back(
                    {pid, label, Role::pseudo_healthy, rel + "phi_" + si + ".pgm", std::nullopt});
            }
        }
    }
    save_manifest(manifest, out_dir / "manifest.jsonl");
    return load_manifest(out_dir / "manifest.jsonl");
}

}  // namespace sage
