#pragma once

#include <filesystem>
#include <utility>

#include "sage/image.hpp"
#include "sage/manifest.hpp"
#include "sage/rng.hpp"

namespace sage {

// Procedural stand-in for the clinical cohort: two classes of blobby tumors
// embedded in synthetic head slices. Classes differ by interior texture
// frequency and boundary roughness, both scaled by class_feature_strength
// (0 = indistinguishable classes).
struct PhantomSpec {
    int patients_per_class = 12;
    int images_per_patient = 9;
    int image_size = 128;
    int crop_size = 64;
    double class_feature_strength = 0.8;

    // relative tumor area band (tumor pixels / whole-slice pixels)
    double rel_area_mean = 0.032;
    double rel_area_std = 0.007;
    double rel_area_min = 0.018;
    double rel_area_max = 0.055;

    void validate() const;
};

// Tumor crop (texture inside the mask, exactly 0 outside) plus its mask, both
// crop_size x crop_size. Mask is a single 4-connected component.
std::pair<ImageGrid, BinaryMask> phantom_tumor(RngHandle shape_rng, RngHandle texture_rng,
                                               ClassLabel label, double strength, int crop_size);

// Writes slices, crops, masks and pseudo-healthy images under out_dir along
// with manifest.jsonl, and returns the loaded manifest.
DatasetManifest generate_phantom_dataset(const PhantomSpec& spec,
                                         const std::filesystem::path& out_dir, RngHandle rng);

}  // namespace sage
