#include "sage/manifest.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace sage {

using nlohmann::json;

std::string to_string(ClassLabel label) {
    return label == ClassLabel::control ? "control" : "mutated";
}

std::string to_string(Role role) {
    switch (role) {
        case Role::tumor_crop: return "tumor_crop";
        case Role::shape_mask: return "shape_mask";
        case Role::pseudo_healthy: return "pseudo_healthy";
        case Role::whole_slice: return "whole_slice";
    }
    return "?";
}

ClassLabel class_label_from_string(const std::string& s) {
    if (s == "control") return ClassLabel::control;
    if (s == "mutated") return ClassLabel::mutated;
    throw std::runtime_error("manifest: unknown class label '" + s + "'");
}

Role role_from_string(const std::string& s) {
    if (s == "tumor_crop") return Role::tumor_crop;
    if (s == "shape_mask") return Role::shape_mask;
    if (s == "pseudo_healthy") return Role::pseudo_healthy;
    if (s == "whole_slice") return Role::whole_slice;
    throw std::runtime_error("manifest: unknown role '" + s + "'");
}

std::vector<ManifestEntry> DatasetManifest::select(std::optional<ClassLabel> label,
                                                   std::optional<Role> role) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (label && e.label != *label) continue;
        if (role && e.role != *role) continue;
        out.push_back(e);
    }
    return out;
}

std::vector<std::string> DatasetManifest::patient_ids(ClassLabel label) const {
    std::set<std::string> ids;
    for (const auto& e : entries)
        if (e.label == label) ids.insert(e.patient_id);
    return {ids.begin(), ids.end()};
}

DatasetManifest DatasetManifest::filter_patients(const std::vector<std::string>& patients) const {
    std::set<std::string> keep(patients.begin(), patients.end());
    DatasetManifest out;
    out.root = root;
    for (const auto& e : entries)
        if (keep.count(e.patient_id)) out.entries.push_back(e);
    return out;
}

void DatasetManifest::validate(bool check_files) const {
    std::set<std::string> paths;
    for (const auto& e : entries) {
        if (e.patient_id.empty()) throw std::runtime_error("manifest: empty patient_id");
        if (e.image_path.empty()) throw std::runtime_error("manifest: empty image_path");
        if (!paths.insert(e.image_path).second)
            throw std::runtime_error("manifest: duplicate image path '" + e.image_path + "'");
        if (e.crop) {
            const CropGeometry& g = *e.crop;
            for (double v : {g.center_row, g.center_col, g.crop_h, g.crop_w}) {
                if (!(v >= 0.0 && v <= 1.0))
                    throw std::runtime_error("manifest: crop coordinate " + std::to_string(v) +
                                             " outside [0,1] for '" + e.image_path + "'");
            }
        }
        if (check_files && !std::filesystem::exists(resolve(e)))
            throw std::runtime_error("manifest: missing image file '" + resolve(e).string() + "'");
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open '" + path.string() + "'");
    DatasetManifest manifest;
    manifest.root = path.parent_path();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("manifest: parse failure at line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        ManifestEntry entry;
        try {
            entry.patient_id = j.at("patient_id").get<std::string>();
            entry.label = class_label_from_string(j.at("class_label").get<std::string>());
            entry.role = role_from_string(j.at("role").get<std::string>());
            entry.image_path = j.at("image_path").get<std::string>();
            if (j.contains("crop_geometry") && !j["crop_geometry"].is_null()) {
                const json& g = j["crop_geometry"];
                entry.crop = CropGeometry{g.at("center_row").get<double>(),
                                          g.at("center_col").get<double>(),
                                          g.at("crop_h").get<double>(),
                                          g.at("crop_w").get<double>()};
            }
        } catch (const json::exception& e) {
            throw std::runtime_error("manifest: bad record at line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        manifest.entries.push_back(std::move(entry));
    }
    manifest.validate(true);
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot open for writing '" + path.string() + "'");
    for (const auto& e : manifest.entries) {
        json j{{"patient_id", e.patient_id},
               {"class_label", to_string(e.label)},
               {"role", to_string(e.role)},
               {"image_path", e.image_path}};
        if (e.crop) {
            j["crop_geometry"] = {{"center_row", e.crop->center_row},
                                  {"center_col", e.crop->center_col},
                                  {"crop_h", e.crop->crop_h},
                                  {"crop_w", e.crop->crop_w}};
        }
        out << j.dump() << "\n";
    }
}

}  // namespace sage
