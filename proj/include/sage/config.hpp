#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sage/eval.hpp"
#include "sage/lms.hpp"
#include "sage/phantom.hpp"
#include "sage/tan.hpp"

namespace sage {

// `key = value` lines, '#' comments; dotted keys group by module.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    uint64_t get_u64(const std::string& key, uint64_t def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<double> get_doubles(const std::string& key, std::vector<double> def) const;
    std::vector<int> get_ints(const std::string& key, std::vector<int> def) const;
    std::vector<std::string> get_strings(const std::string& key,
                                         std::vector<std::string> def) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// One configuration object for the whole run; CLI flags override file values
// and SAGE_SEED overrides the seed.
struct RunConfig {
    uint64_t seed = 42;
    std::filesystem::path out_root;
    std::filesystem::path manifest_path;   // ignored when phantom.enabled
    std::filesystem::path extractor_path;  // frozen feature-extractor checkpoint

    bool phantom_enabled = true;
    PhantomSpec phantom;

    LmsConfig lms;
    TanConfig tan;

    double merge_k = 2.0;
    double taper_sigma_px = 2.0;

    int shapes_per_class = 100;   // generated masks/crops persisted by the run
    int merged_per_class = 60;    // merged whole images persisted by the run
    int ssim_pairs = 200;

    ClassifierConfig classifier;
    int eval_folds = 10;
    double eval_test_fraction = 0.2;
    int eval_synthetic_per_class = 500;
    std::vector<std::string> eval_sources = {"real", "sage"};
    Role eval_role = Role::tumor_crop;

    static RunConfig from_kv(const KeyValueConfig& kv);
    // fail-fast checks (paths exist, numeric ranges); runs before any stage
    void validate() const;
    nlohmann::json to_json() const;
};

}  // namespace sage
