#include "sage/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sage {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
    KeyValueConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected 'key = value' at line " +
                                     std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config: empty key at line " + std::to_string(line_no));
        cfg.values_[key] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' is not a number: " + it->second);
    }
}

int KeyValueConfig::get_int(const std::string& key, int def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        return std::stoi(it->second);
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second);
    }
}

uint64_t KeyValueConfig::get_u64(const std::string& key, uint64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second);
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean: " + v);
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                std::vector<double> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    for (const auto& tok : split(it->second, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<int> KeyValueConfig::get_ints(const std::string& key, std::vector<int> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<int> out;
    for (const auto& tok : split(it->second, ',')) out.push_back(std::stoi(tok));
    return out;
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key,
                                                     std::vector<std::string> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    return split(it->second, ',');
}

RunConfig RunConfig::from_kv(const KeyValueConfig& kv) {
    RunConfig c;
    c.seed = kv.get_u64("seed", c.seed);
    if (const char* env = std::getenv("SAGE_SEED"); env && *env)
        c.seed = std::stoull(env);  // environment wins over the file

    c.out_root = kv.get_string("out_root", "runs/run");
    c.manifest_path = kv.get_string("manifest", "");
    c.extractor_path = kv.get_string("extractor", "");

    c.phantom_enabled = kv.get_bool("phantom.enabled", c.phantom_enabled);
    c.phantom.patients_per_class =
        kv.get_int("phantom.patients_per_class", c.phantom.patients_per_class);
    c.phantom.images_per_patient =
        kv.get_int("phantom.images_per_patient", c.phantom.images_per_patient);
    c.phantom.image_size = kv.get_int("phantom.image_size_px", c.phantom.image_size);
    c.phantom.crop_size = kv.get_int("phantom.crop_size_px", c.phantom.crop_size);
    c.phantom.class_feature_strength =
        kv.get_double("phantom.class_feature_strength", c.phantom.class_feature_strength);

    c.lms.latent_dim = kv.get_int("lms.latent_dim", c.lms.latent_dim);
    c.lms.mask_h = kv.get_int("lms.mask_size_px", c.lms.mask_h);
    c.lms.mask_w = c.lms.mask_h;
    c.lms.p_noise = kv.get_double("lms.p_noise", c.lms.p_noise);
    c.lms.jitter_sigma = kv.get_double("lms.jitter_sigma", c.lms.jitter_sigma);
    const std::string mode = kv.get_string("lms.multiplex_mode", "jitter");
    if (mode == "jitter")
        c.lms.multiplex_mode = MultiplexMode::jitter;
    else if (mode == "coordinate_mix")
        c.lms.multiplex_mode = MultiplexMode::coordinate_mix;
    else
        throw std::runtime_error("config: lms.multiplex_mode must be jitter|coordinate_mix");
    const std::string sched = kv.get_string("lms.switch_schedule", "bernoulli");
    if (sched == "bernoulli")
        c.lms.switch_schedule = SwitchSchedule::bernoulli;
    else if (sched == "alternate")
        c.lms.switch_schedule = SwitchSchedule::alternate;
    else
        throw std::runtime_error("config: lms.switch_schedule must be bernoulli|alternate");
    const std::string adv = kv.get_string("lms.adversarial", "non_saturating");
    if (adv == "non_saturating")
        c.lms.adversarial = AdversarialObjective::non_saturating;
    else if (adv == "log_one_minus")
        c.lms.adversarial = AdversarialObjective::log_one_minus;
    else
        throw std::runtime_error("config: lms.adversarial must be non_saturating|log_one_minus");
    c.lms.noise_through_encoder =
        kv.get_bool("lms.noise_through_encoder", c.lms.noise_through_encoder);
    c.lms.encoder_channels = kv.get_ints("lms.encoder_channels", c.lms.encoder_channels);
    c.lms.generator_hidden = kv.get_ints("lms.generator_hidden", c.lms.generator_hidden);
    c.lms.discriminator_channels =
        kv.get_ints("lms.discriminator_channels", c.lms.discriminator_channels);
    c.lms.lr_generator = kv.get_double("lms.learning_rate_generator", c.lms.lr_generator);
    c.lms.lr_discriminator =
        kv.get_double("lms.learning_rate_discriminator", c.lms.lr_discriminator);
    c.lms.batch_size = kv.get_int("lms.batch_size", c.lms.batch_size);
    c.lms.epochs = kv.get_int("lms.epochs", c.lms.epochs);

    c.tan.layer_weights = kv.get_doubles("tan.layer_weights", c.tan.layer_weights);
    c.tan.content_weight = kv.get_double("tan.content_weight", c.tan.content_weight);
    c.tan.steps = kv.get_int("tan.steps", c.tan.steps);
    c.tan.step_size = kv.get_double("tan.step_size", c.tan.step_size);
    const std::string init = kv.get_string("tan.init", "content");
    if (init == "content")
        c.tan.init = TanConfig::Init::content;
    else if (init == "content_plus_noise")
        c.tan.init = TanConfig::Init::content_plus_noise;
    else
        throw std::runtime_error("config: tan.init must be content|content_plus_noise");
    c.tan.init_noise_sigma = kv.get_double("tan.init_noise_sigma", c.tan.init_noise_sigma);
    c.tan.squared_norms = kv.get_bool("tan.squared_norms", c.tan.squared_norms);

    c.merge_k = kv.get_double("merge.k_sigma", c.merge_k);
    c.taper_sigma_px = kv.get_double("merge.taper_sigma_px", c.taper_sigma_px);

    c.shapes_per_class = kv.get_int("gen.shapes_per_class", c.shapes_per_class);
    c.merged_per_class = kv.get_int("gen.merged_per_class", c.merged_per_class);
    c.ssim_pairs = kv.get_int("score.ssim_pairs", c.ssim_pairs);

    c.classifier.input_size = kv.get_int("classifier.input_size_px", c.classifier.input_size);
    c.classifier.channels = kv.get_ints("classifier.channels", c.classifier.channels);
    c.classifier.learning_rate =
        kv.get_double("classifier.learning_rate", c.classifier.learning_rate);
    c.classifier.lr_step_epochs =
        kv.get_int("classifier.lr_step_epochs", c.classifier.lr_step_epochs);
    c.classifier.lr_decay = kv.get_double("classifier.lr_decay", c.classifier.lr_decay);
    c.classifier.epochs = kv.get_int("classifier.epochs", c.classifier.epochs);
    c.classifier.batch_size = kv.get_int("classifier.batch_size", c.classifier.batch_size);
    c.classifier.pretrained_init_path =
        kv.get_string("classifier.pretrained_init", c.classifier.pretrained_init_path);

    c.eval_folds = kv.get_int("eval.folds", c.eval_folds);
    c.eval_test_fraction = kv.get_double("eval.test_fraction", c.eval_test_fraction);
    c.eval_synthetic_per_class =
        kv.get_int("eval.synthetic_per_class", c.eval_synthetic_per_class);
    c.eval_sources = kv.get_strings("eval.sources", c.eval_sources);
    const std::string role = kv.get_string("eval.role", "tumor_crop");
    c.eval_role = role_from_string(role);
    return c;
}

void RunConfig::validate() const {
    if (out_root.empty()) throw std::runtime_error("config: out_root is required");
    if (!phantom_enabled) {
        if (manifest_path.empty() || !std::filesystem::exists(manifest_path))
            throw std::runtime_error("config: manifest path missing or nonexistent: '" +
                                     manifest_path.string() + "'");
    }
    if (extractor_path.empty() || !std::filesystem::exists(extractor_path))
        throw std::runtime_error(
            "config: extractor weights not found at '" + extractor_path.string() +
            "' (create them with `sage make-extractor`)");
    phantom.validate();
    lms.validate();
    classifier.validate();
    if (!(merge_k > 0)) throw std::runtime_error("config: merge.k_sigma must be positive");
    if (taper_sigma_px < 0) throw std::runtime_error("config: merge.taper_sigma_px must be >= 0");
    if (shapes_per_class <= 0 || merged_per_class < 0 || ssim_pairs <= 0)
        throw std::runtime_error("config: generation counts must be positive");
    if (eval_folds <= 0 || !(eval_test_fraction > 0 && eval_test_fraction < 1))
        throw std::runtime_error("config: bad eval split settings");
    for (const auto& s : eval_sources)
        if (s != "real" && s != "sage")
            throw std::runtime_error("config: eval.sources entries must be real|sage");
    if (eval_role != Role::tumor_crop && eval_role != Role::whole_slice)
        throw std::runtime_error("config: eval.role must be tumor_crop|whole_slice");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["out_root"] = out_root.string();
    j["manifest"] = manifest_path.string();
    j["extractor"] = extractor_path.string();
    j["phantom"] = {{"enabled", phantom_enabled},
                    {"patients_per_class", phantom.patients_per_class},
                    {"images_per_patient", phantom.images_per_patient},
                    {"image_size_px", phantom.image_size},
                    {"crop_size_px", phantom.crop_size},
                    {"class_feature_strength", phantom.class_feature_strength}};
    j["lms"] = {{"latent_dim", lms.latent_dim},
                {"mask_size_px", lms.mask_h},
                {"p_noise", lms.p_noise},
                {"jitter_sigma", lms.jitter_sigma},
                {"epochs", lms.epochs},
                {"batch_size", lms.batch_size}};
    j["tan"] = {{"steps", tan.steps}, {"step_size", tan.step_size}};
    j["merge"] = {{"k_sigma", merge_k}, {"taper_sigma_px", taper_sigma_px}};
    j["gen"] = {{"shapes_per_class", shapes_per_class}, {"merged_per_class", merged_per_class}};
    j["classifier"] = {{"input_size_px", classifier.input_size},
                       {"learning_rate", classifier.learning_rate},
                       {"epochs", classifier.epochs}};
    j["eval"] = {{"folds", eval_folds},
                 {"test_fraction", eval_test_fraction},
                 {"synthetic_per_class", eval_synthetic_per_class},
                 {"sources", eval_sources},
                 {"role", to_string(eval_role)}};
    return j;
}

}  // namespace sage
