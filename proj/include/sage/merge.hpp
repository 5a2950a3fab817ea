#pragma once

#include <filesystem>
#include <vector>

#include "sage/image.hpp"
#include "sage/manifest.hpp"
#include "sage/rng.hpp"

namespace sage {

struct MeanStd {
    double mean = 0;
    double std = 0;
};

// Per-class placement statistics measured from the real dataset.
struct AttributeStats {
    ClassLabel label = ClassLabel::control;
    MeanStd center_row, center_col;  // normalized [0,1]
    MeanStd rel_size;                // tumor area / whole-image area
    MeanStd rotation_deg;            // principal-axis angle, [-90, 90)
    int sample_count = 0;

    void validate() const;
};

// Location from crop centers, relative size from mask area / slice area,
// rotation from second-moment principal axes; unbiased std. Needs at least
// two shape-mask entries with crop geometry for the class.
AttributeStats estimate_stats(const DatasetManifest& manifest, ClassLabel label);

struct PlacementSample {
    double center_row = 0;   // normalized
    double center_col = 0;
    double rel_size = 0;
    double rotation_deg = 0;
    double taper_sigma = 2.0;  // pixels
};

// Uniform draw from [mean - k*std, mean + k*std] per attribute; centers are
// clipped so the scaled tumor stays inside the image. Throws when the size
// range cannot fit at all.
PlacementSample sample_placement(const AttributeStats& stats, double k, RngHandle& rng,
                                 double taper_sigma = 2.0);

struct MergeResult {
    ImageGrid image;
    BinaryMask placed_mask;  // slice-sized, after scale+rotate+re-binarize
};

// Scales the tumor to the sampled relative size, rotates it, places it at the
// sampled center (restricted to the PHI brain foreground) and alpha-blends
// with a Gaussian-tapered mask.
MergeResult merge_detailed(const ImageGrid& syn_tc, const BinaryMask& syn_btc,
                           const ImageGrid& phi, const PlacementSample& placement);
ImageGrid merge(const ImageGrid& syn_tc, const BinaryMask& syn_btc, const ImageGrid& phi,
                const PlacementSample& placement);

// Brain foreground: Otsu threshold + morphological closing.
BinaryMask phi_foreground(const ImageGrid& phi);

void save_stats(const std::vector<AttributeStats>& stats, const std::filesystem::path& path);
std::vector<AttributeStats> load_stats(const std::filesystem::path& path);

}  // namespace sage
