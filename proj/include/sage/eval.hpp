#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sage/lms.hpp"
#include "sage/manifest.hpp"
#include "sage/merge.hpp"
#include "sage/metrics.hpp"
#include "sage/nn.hpp"
#include "sage/rng.hpp"
#include "sage/tan.hpp"

namespace sage {

struct FoldPlan {
    int index = 0;
    std::vector<std::string> train_patients;
    std::vector<std::string> test_patients;
    std::map<ClassLabel, double> test_proportion;  // per class

    void validate() const;  // patient-level disjointness
};

// n_folds independent class-stratified random patient splits. Needs at least
// 5 patients per class.
std::vector<FoldPlan> make_folds(const DatasetManifest& manifest, int n_folds,
                                 double test_fraction, RngHandle& rng);

struct ClassifierConfig {
    int input_size = 64;
    std::vector<int> channels = {8, 16, 32};  // stem + two strided stages
    double learning_rate = 1e-4;
    int lr_step_epochs = 0;   // 0 disables the step schedule
    double lr_decay = 0.5;
    int epochs = 40;
    int batch_size = 32;
    // optional "pretrained" initialization from a classifier checkpoint
    std::string pretrained_init_path;

    void validate() const;
};

struct LabeledImage {
    ImageGrid image;
    ClassLabel label = ClassLabel::control;
    std::string patient_id;
};

// Small residual conv classifier; positive class is `mutated`.
class Classifier {
public:
    Classifier(const ClassifierConfig& config, RngHandle rng);

    ClassProbabilities predict(const ImageGrid& image);
    nn::Mat<float> predict_columns(const nn::Mat<float>& cols);  // 2 x B probabilities

    const ClassifierConfig& config() const { return config_; }
    nn::Sequential<float>& net() { return net_; }
    nn::Mat<float> prepare(const ImageGrid& image) const;  // resize + flatten

private:
    ClassifierConfig config_;
    nn::Sequential<float> net_;
};

Classifier train_classifier(const std::vector<LabeledImage>& train, const ClassifierConfig& config,
                            RngHandle& rng, std::vector<double>* epoch_loss = nullptr);

void save_classifier_checkpoint(Classifier& clf, uint64_t seed,
                                const std::filesystem::path& path);
Classifier load_classifier_checkpoint(const std::filesystem::path& path);

struct FoldMetrics {
    double acc_il = 0, sen_il = 0, spec_il = 0, dic_il = 0, acc_pl = 0;
    int tp = 0, fp = 0, tn = 0, fn = 0;  // image-level confusion, positive = mutated
};

// IL metrics from per-image mutated-class probabilities; PL prediction is the
// mean per-patient probability thresholded at 0.5.
FoldMetrics metrics_from_predictions(const std::vector<double>& p_mutated,
                                     const std::vector<LabeledImage>& test);
FoldMetrics evaluate_fold(Classifier& clf, const std::vector<LabeledImage>& test);

struct EvalReport {
    std::string source;
    std::vector<FoldMetrics> folds;
    MeanStd acc_pl, acc_il, sen_il, spec_il, dic_il;

    void finalize();            // fills the aggregates
    std::string table() const;  // text report, one column set per metric
    void save(const std::filesystem::path& path) const;
};

enum class ExperimentSource { real, sage, external_dir };

// Everything the per-fold SAGE pipeline needs to turn a training manifest
// into a synthetic training set.
struct SageGenConfig {
    LmsConfig lms;
    TanConfig tan;
    double merge_k = 2.0;
    double taper_sigma = 2.0;
    int merges_per_phi_retry = 20;
};

struct ExperimentConfig {
    ExperimentSource source = ExperimentSource::real;
    Role train_role = Role::tumor_crop;  // or whole_slice
    ClassifierConfig classifier;
    SageGenConfig sage;
    int synthetic_per_class = 500;
    std::filesystem::path external_dir;  // for source = external_dir
};

// Trains SAGE on the (training-fold) manifest only and emits synthetic crops.
std::vector<LabeledImage> sage_generate_crops(const DatasetManifest& train_manifest,
                                              const SageGenConfig& config,
                                              FeatureExtractor<float>& extractor, int per_class,
                                              RngHandle& rng);

// Crops merged onto the training patients' pseudo-healthy slices.
std::vector<LabeledImage> sage_generate_whole(const DatasetManifest& train_manifest,
                                              const SageGenConfig& config,
                                              FeatureExtractor<float>& extractor, int per_class,
                                              RngHandle& rng);

std::vector<LabeledImage> load_labeled_images(const DatasetManifest& manifest, Role role);
std::vector<LabeledImage> load_labeled_dir(const std::filesystem::path& dir);

// Per-fold train/evaluate under the fixed-test-set protocol. When source is
// `sage`, generation sees only each fold's training patients. The extractor
// is required for the sage source and may be null otherwise.
EvalReport run_experiment(const ExperimentConfig& config, const DatasetManifest& manifest,
                          const std::vector<FoldPlan>& folds,
                          FeatureExtractor<float>* extractor, RngHandle& rng);

// --- blind test --------------------------------------------------------------

struct BlindCounts {
    int real = 0;
    int synthetic = 0;
};

struct BlindTestKey {
    std::map<std::string, std::string> origin;  // "<class>/<id>" -> real|synthetic
};

// Anonymizes, resizes to 100x100 and writes one folder per class plus a
// key.json beside (not inside) the image folders.
BlindTestKey package_blind_test(const std::map<ClassLabel, std::vector<ImageGrid>>& real,
                                const std::map<ClassLabel, std::vector<ImageGrid>>& synthetic,
                                const std::map<ClassLabel, BlindCounts>& counts, RngHandle& rng,
                                const std::filesystem::path& out_dir);

BlindTestKey load_blind_key(const std::filesystem::path& path);

struct BlindScore {
    double acc = 0, fpr = 0, fnr = 0, pr = 0;
};

// responses: identifier -> "real" | "fake"; must cover every key entry.
BlindScore score_blind_test(const BlindTestKey& key,
                            const std::map<std::string, std::string>& responses);

}  // namespace sage
