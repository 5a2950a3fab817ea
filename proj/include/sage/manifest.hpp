#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sage {

enum class ClassLabel { control, mutated };
enum class Role { tumor_crop, shape_mask, pseudo_healthy, whole_slice };

std::string to_string(ClassLabel label);
std::string to_string(Role role);
ClassLabel class_label_from_string(const std::string& s);
Role role_from_string(const std::string& s);

// Crop placement in whole-slice normalized coordinates; all values in [0,1].
struct CropGeometry {
    double center_row = 0;
    double center_col = 0;
    double crop_h = 0;
    double crop_w = 0;
};

struct ManifestEntry {
    std::string patient_id;
    ClassLabel label = ClassLabel::control;
    Role role = Role::tumor_crop;
    std::string image_path;  // relative to the manifest's directory
    std::optional<CropGeometry> crop;
};

struct DatasetManifest {
    std::filesystem::path root;  // directory the image paths are relative to
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.image_path; }
    std::vector<ManifestEntry> select(std::optional<ClassLabel> label,
                                      std::optional<Role> role) const;
    std::vector<std::string> patient_ids(ClassLabel label) const;  // sorted unique
    DatasetManifest filter_patients(const std::vector<std::string>& patients) const;
    void validate(bool check_files = true) const;
};

// JSON-lines manifest, one entry per line. Throws on parse failure, duplicate
// image paths, crop coordinates outside [0,1], or missing image files.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace sage
