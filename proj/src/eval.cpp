#include "sage/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sage/checkpoint.hpp"
#include "sage/imgproc.hpp"
#include "sage/nn_image.hpp"
#include "sage/pgm.hpp"

namespace sage {

using nn::Mat;

void FoldPlan::validate() const {
    std::set<std::string> train(train_patients.begin(), train_patients.end());
    for (const auto& p : test_patients)
        if (train.count(p))
            throw std::logic_error("FoldPlan: patient '" + p + "' appears in train and test");
    if (train_patients.empty() || test_patients.empty())
        throw std::logic_error("FoldPlan: empty split");
}

std::vector<FoldPlan> make_folds(const DatasetManifest& manifest, int n_folds,
                                 double test_fraction, RngHandle& rng) {
    if (n_folds <= 0) throw std::invalid_argument("make_folds: n_folds must be positive");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("make_folds: test_fraction must lie in (0,1)");

    std::map<ClassLabel, std::vector<std::string>> by_class;
    for (ClassLabel label : {ClassLabel::control, ClassLabel::mutated}) {
        by_class[label] = manifest.patient_ids(label);
        if (by_class[label].size() < 5)
            throw std::runtime_error("make_folds: need at least 5 patients per class, " +
                                     to_string(label) + " has " +
                                     std::to_string(by_class[label].size()));
    }

    std::vector<FoldPlan> folds;
    for (int f = 0; f < n_folds; ++f) {
        FoldPlan plan;
        plan.index = f;
        for (auto& [label, ids] : by_class) {
            std::vector<std::string> shuffled = ids;
            rng.shuffle(shuffled);
            const int n_test = std::max<int>(
                1, static_cast<int>(std::llround(test_fraction * shuffled.size())));
            for (int i = 0; i < static_cast<int>(shuffled.size()); ++i) {
                if (i < n_test)
                    plan.test_patients.push_back(shuffled[i]);
                else
                    plan.train_patients.push_back(shuffled[i]);
            }
            plan.test_proportion[label] =
                static_cast<double>(n_test) / static_cast<double>(shuffled.size());
        }
        std::sort(plan.train_patients.begin(), plan.train_patients.end());
        std::sort(plan.test_patients.begin(), plan.test_patients.end());
        plan.validate();
        folds.push_back(std::move(plan));
    }
    return folds;
}

void ClassifierConfig::validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("ClassifierConfig: learning rate must be > 0");
    if (channels.size() != 3) throw std::invalid_argument("ClassifierConfig: expected 3 widths");
    if (input_size < 8 || input_size % 8 != 0)
        throw std::invalid_argument("ClassifierConfig: input_size must be a multiple of 8");
    if (epochs < 0 || batch_size <= 0) throw std::invalid_argument("ClassifierConfig: bad budget");
    if (lr_step_epochs < 0 || lr_decay <= 0)
        throw std::invalid_argument("ClassifierConfig: bad lr schedule");
}

namespace {

nn::Sequential<float> build_classifier_net(const ClassifierConfig& cfg, RngHandle rng) {
    nn::Sequential<float> net({1, cfg.input_size, cfg.input_size});
    net.emplace<nn::Conv2d<float>>(net.shape(), cfg.channels[0], 3, 2, 1, rng);
    net.emplace<nn::ReLU<float>>();
    net.emplace<nn::ResidualBlock<float>>(net.shape(), cfg.channels[1], 2, rng);
    net.emplace<nn::ResidualBlock<float>>(net.shape(), cfg.channels[2], 2, rng);
    net.emplace<nn::ResidualBlock<float>>(net.shape(), cfg.channels[2], 1, rng);
    net.emplace<nn::GlobalAvgPool<float>>(net.shape());
    net.emplace<nn::Dense<float>>(net.shape().size(), 2, rng, nn::InitKind::xavier);
    return net;
}

MeanStd mean_std_of(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    if (xs.size() >= 2) {
        double acc = 0;
        for (double x : xs) acc += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(acc / (static_cast<double>(xs.size()) - 1.0));
    }
    return out;
}

}  // namespace

Classifier::Classifier(const ClassifierConfig& config, RngHandle rng) : config_(config) {
    config_.validate();
    net_ = build_classifier_net(config_, rng.fork("net"));
    if (!config_.pretrained_init_path.empty()) {
        std::ifstream in;
        open_checkpoint(in, config_.pretrained_init_path, "classifier");
        nn::read_params(in, net_.params());
    }
}

Mat<float> Classifier::prepare(const ImageGrid& image) const {
    const int S = config_.input_size;
    if (image.height == S && image.width == S) return image_to_column<float>(image);
    return image_to_column<float>(resize_bilinear(image, S, S));
}

Mat<float> Classifier::predict_columns(const Mat<float>& cols) {
    return nn::softmax(net_.forward(cols, false));
}

ClassProbabilities Classifier::predict(const ImageGrid& image) {
    Mat<float> p = predict_columns(prepare(image));
    return {static_cast<double>(p(0, 0)), static_cast<double>(p(1, 0))};
}

Classifier train_classifier(const std::vector<LabeledImage>& train, const ClassifierConfig& config,
                            RngHandle& rng, std::vector<double>* epoch_loss) {
    config.validate();
    bool has_control = false, has_mutated = false;
    for (const auto& li : train) {
        has_control |= li.label == ClassLabel::control;
        has_mutated |= li.label == ClassLabel::mutated;
    }
    if (!has_control || !has_mutated)
        throw std::invalid_argument("train_classifier: training set must contain both classes");

    Classifier clf(config, rng.fork("init"));
    const int N = static_cast<int>(train.size());
    Mat<float> X(config.input_size * config.input_size, N);
    std::vector<int> labels(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        X.col(i) = clf.prepare(train[static_cast<size_t>(i)].image);
        labels[static_cast<size_t>(i)] =
            train[static_cast<size_t>(i)].label == ClassLabel::mutated ? 1 : 0;
    }

    nn::Adam<float> adam(clf.net().params(), config.learning_rate);
    RngHandle order_rng = rng.fork("order");
    std::vector<int> idx(static_cast<size_t>(N));
    std::iota(idx.begin(), idx.end(), 0);
    const int batch = std::min(config.batch_size, N);
    const int steps = (N + batch - 1) / batch;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.lr_step_epochs > 0)
            adam.set_lr(config.learning_rate *
                        std::pow(config.lr_decay, epoch / config.lr_step_epochs));
        order_rng.shuffle(idx);
        double loss_acc = 0;
        for (int s = 0; s < steps; ++s) {
            const int lo = s * batch;
            const int b = std::min(batch, N - lo);
            Mat<float> xb(X.rows(), b);
            std::vector<int> yb(static_cast<size_t>(b));
            for (int i = 0; i < b; ++i) {
                xb.col(i) = X.col(idx[static_cast<size_t>(lo + i)]);
                yb[static_cast<size_t>(i)] = labels[static_cast<size_t>(idx[static_cast<size_t>(lo + i)])];
            }
            adam.zero_grad();
            Mat<float> logits = clf.net().forward(xb, true);
            Mat<float> dlogits;
            const double loss = nn::softmax_cross_entropy(logits, yb, &dlogits);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_classifier: non-finite loss");
            clf.net().backward(dlogits);
            adam.step();
            loss_acc += loss;
        }
        if (epoch_loss) epoch_loss->push_back(loss_acc / steps);
    }
    return clf;
}

void save_classifier_checkpoint(Classifier& clf, uint64_t seed,
                                const std::filesystem::path& path) {
    const auto& c = clf.config();
    nlohmann::json header{{"input_size", c.input_size},
                          {"channels", c.channels},
                          {"learning_rate", c.learning_rate},
                          {"lr_step_epochs", c.lr_step_epochs},
                          {"lr_decay", c.lr_decay},
                          {"epochs", c.epochs},
                          {"batch_size", c.batch_size},
                          {"seed", seed}};
    save_checkpoint(path, "classifier", header,
                    [&](std::ostream& out) { nn::write_params(out, clf.net().params()); });
}

Classifier load_classifier_checkpoint(const std::filesystem::path& path) {
    std::ifstream in;
    nlohmann::json h = open_checkpoint(in, path, "classifier");
    ClassifierConfig cfg;
    cfg.input_size = h.at("input_size").get<int>();
    cfg.channels = h.at("channels").get<std::vector<int>>();
    cfg.learning_rate = h.at("learning_rate").get<double>();
    cfg.lr_step_epochs = h.at("lr_step_epochs").get<int>();
    cfg.lr_decay = h.at("lr_decay").get<double>();
    cfg.epochs = h.at("epochs").get<int>();
    cfg.batch_size = h.at("batch_size").get<int>();
    Classifier clf(cfg, RngHandle(0, "classifier-load"));
    nn::read_params(in, clf.net().params());
    return clf;
}

FoldMetrics metrics_from_predictions(const std::vector<double>& p_mutated,
                                     const std::vector<LabeledImage>& test) {
    if (test.empty()) throw std::invalid_argument("evaluate_fold: empty test set");
    if (p_mutated.size() != test.size())
        throw std::invalid_argument("metrics_from_predictions: prediction count mismatch");
    FoldMetrics m;
    struct PatientAcc {
        double prob_sum = 0;
        int count = 0;
        ClassLabel label = ClassLabel::control;
    };
    std::map<std::string, PatientAcc> patients;

    for (size_t i = 0; i < test.size(); ++i) {
        const LabeledImage& li = test[i];
        const bool pred_mut = p_mutated[i] >= 0.5;
        const bool is_mut = li.label == ClassLabel::mutated;
        if (is_mut && pred_mut) ++m.tp;
        if (is_mut && !pred_mut) ++m.fn;
        if (!is_mut && pred_mut) ++m.fp;
        if (!is_mut && !pred_mut) ++m.tn;
        auto& acc = patients[li.patient_id];
        acc.prob_sum += p_mutated[i];
        acc.count += 1;
        acc.label = li.label;
    }

    const double total = static_cast<double>(m.tp + m.fp + m.tn + m.fn);
    auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    m.acc_il = (m.tp + m.tn) / total;
    m.sen_il = ratio(m.tp, m.tp + m.fn);
    m.spec_il = ratio(m.tn, m.tn + m.fp);
    const double precision = ratio(m.tp, m.tp + m.fp);
    m.dic_il = precision + m.sen_il > 0 ? 2 * precision * m.sen_il / (precision + m.sen_il) : 0.0;

    int correct_patients = 0;
    for (const auto& [pid, acc] : patients) {
        const bool pred_mut = acc.prob_sum / acc.count >= 0.5;
        if (pred_mut == (acc.label == ClassLabel::mutated)) ++correct_patients;
    }
    m.acc_pl = static_cast<double>(correct_patients) / static_cast<double>(patients.size());
    return m;
}

FoldMetrics evaluate_fold(Classifier& clf, const std::vector<LabeledImage>& test) {
    std::vector<double> p_mut;
    p_mut.reserve(test.size());
    for (const auto& li : test) p_mut.push_back(clf.predict(li.image)[1]);
    return metrics_from_predictions(p_mut, test);
}

void EvalReport::finalize() {
    auto collect = [&](auto field) {
        std::vector<double> xs;
        for (const auto& f : folds) xs.push_back(f.*field);
        return mean_std_of(xs);
    };
    acc_pl = collect(&FoldMetrics::acc_pl);
    acc_il = collect(&FoldMetrics::acc_il);
    sen_il = collect(&FoldMetrics::sen_il);
    spec_il = collect(&FoldMetrics::spec_il);
    dic_il = collect(&FoldMetrics::dic_il);
}

std::string EvalReport::table() const {
    std::ostringstream os;
    auto cell = [](const MeanStd& m) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f (%.2f)", m.mean, m.std);
        return std::string(buf);
    };
    os << "Input source | ACC (PL) | ACC (IL) | SEN (IL) | SPEC (IL) | DIC (IL)\n";
    os << source << " | " << cell(acc_pl) << " | " << cell(acc_il) << " | " << cell(sen_il)
       << " | " << cell(spec_il) << " | " << cell(dic_il) << "\n";
    return os.str();
}

void EvalReport::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("EvalReport: cannot open " + path.string());
    out << table();
    out << "\nper-fold (ACC_PL ACC_IL SEN_IL SPEC_IL DIC_IL):\n";
    for (const auto& f : folds) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "  %.4f %.4f %.4f %.4f %.4f\n", f.acc_pl, f.acc_il,
                      f.sen_il, f.spec_il, f.dic_il);
        out << buf;
    }

    nlohmann::json j{{"source", source}};
    auto ms = [](const MeanStd& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
    j["aggregate"] = {{"acc_pl", ms(acc_pl)},
                     {"acc_il", ms(acc_il)},
                     {"sen_il", ms(sen_il)},
                     {"spec_il", ms(spec_il)},
                     {"dic_il", ms(dic_il)}};
    nlohmann::json fold_array = nlohmann::json::array();
    for (const auto& f : folds)
        fold_array.push_back({{"acc_pl", f.acc_pl},
                              {"acc_il", f.acc_il},
                              {"sen_il", f.sen_il},
                              {"spec_il", f.spec_il},
                              {"dic_il", f.dic_il},
                              {"tp", f.tp},
                              {"fp", f.fp},
                              {"tn", f.tn},
                              {"fn", f.fn}});
    j["folds"] = fold_array;
    std::ofstream jout(path.string() + ".json");
    jout << j.dump(2) << "\n";
}

std::vector<LabeledImage> load_labeled_images(const DatasetManifest& manifest, Role role) {
    std::vector<LabeledImage> out;
    for (const auto& e : manifest.select(std::nullopt, role))
        out.push_back({load_pgm(manifest.resolve(e)), e.label, e.patient_id});
    return out;
}

std::vector<LabeledImage> load_labeled_dir(const std::filesystem::path& dir) {
    std::vector<LabeledImage> out;
    for (ClassLabel label : {ClassLabel::control, ClassLabel::mutated}) {
        const std::filesystem::path sub = dir / to_string(label);
        if (!std::filesystem::is_directory(sub))
            throw std::runtime_error("load_labeled_dir: missing directory " + sub.string());
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(sub))
            if (entry.path().extension() == ".pgm") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) out.push_back({load_pgm(f), label, "external"});
    }
    return out;
}

std::vector<LabeledImage> sage_generate_crops(const DatasetManifest& train_manifest,
                                              const SageGenConfig& config,
                                              FeatureExtractor<float>& extractor, int per_class,
                                              RngHandle& rng) {
    if (config.lms.mask_h != extractor.arch().input_size ||
        config.lms.mask_w != extractor.arch().input_size)
        throw std::invalid_argument(
            "sage_generate_crops: LMS mask size must match the extractor input size");

    std::vector<LabeledImage> out;
    for (ClassLabel label : {ClassLabel::control, ClassLabel::mutated}) {
        const std::string ls = to_string(label);
        std::vector<BinaryMask> masks;
        for (const auto& e : train_manifest.select(label, Role::shape_mask)) {
            BinaryMask m = load_mask_pgm(train_manifest.resolve(e));
            if (m.height != config.lms.mask_h || m.width != config.lms.mask_w)
                m = binarize(resize_bilinear(m.to_image(), config.lms.mask_h, config.lms.mask_w),
                             0.5);
            if (m.foreground_count() > 0) masks.push_back(std::move(m));
        }
        std::vector<ImageGrid> textures;
        for (const auto& e : train_manifest.select(label, Role::tumor_crop))
            textures.push_back(load_pgm(train_manifest.resolve(e)));
        if (masks.size() < 2 || textures.empty())
            throw std::runtime_error("sage_generate_crops: not enough " + ls + " training data");

        LmsModel model(config.lms, rng.fork(ls + "/lms-init"));
        RngHandle train_rng = rng.fork(ls + "/lms-train");
        train_lms(model, masks, train_rng);
        RngHandle gen_rng = rng.fork(ls + "/gen");
        std::vector<BinaryMask> syn_masks = generate_masks(model, per_class, gen_rng);
        RngHandle align_rng = rng.fork(ls + "/align");
        std::vector<ImageGrid> syn_tcs =
            align_textures(extractor, syn_masks, textures, config.tan, align_rng);
        for (auto& img : syn_tcs) out.push_back({std::move(img), label, "synthetic_" + ls});
    }
    return out;
}

std::vector<LabeledImage> sage_generate_whole(const DatasetManifest& train_manifest,
                                              const SageGenConfig& config,
                                              FeatureExtractor<float>& extractor, int per_class,
                                              RngHandle& rng) {
    std::vector<LabeledImage> crops =
        sage_generate_crops(train_manifest, config, extractor, per_class, rng);
    std::vector<LabeledImage> out;
    for (ClassLabel label : {ClassLabel::control, ClassLabel::mutated}) {
        const std::string ls = to_string(label);
        AttributeStats stats = estimate_stats(train_manifest, label);
        std::vector<ImageGrid> phis;
        for (const auto& e : train_manifest.select(label, Role::pseudo_healthy))
            phis.push_back(load_pgm(train_manifest.resolve(e)));
        if (phis.empty())
            throw std::runtime_error("sage_generate_whole: no pseudo-healthy images for " + ls);

        RngHandle merge_rng = rng.fork(ls + "/merge");
        for (const auto& crop : crops) {
            if (crop.label != label) continue;
            BinaryMask support(crop.image.height, crop.image.width);
            for (size_t i = 0; i < crop.image.pixels.size(); ++i)
                support.pixels[i] = crop.image.pixels[i] > 0.0 ? 1 : 0;
            bool merged = false;
            for (int attempt = 0; attempt < config.merges_per_phi_retry && !merged; ++attempt) {
                PlacementSample placement =
                    sample_placement(stats, config.merge_k, merge_rng, config.taper_sigma);
                const ImageGrid& phi =
                    phis[static_cast<size_t>(merge_rng.uniform_int(phis.size()))];
                try {
                    out.push_back({merge(crop.image, support, phi, placement), label,
                                   "synthetic_" + ls});
                    merged = true;
                } catch (const std::runtime_error&) {
                    // placement rejected (outside the brain or does not fit); redraw
                }
            }
            if (!merged)
                throw std::runtime_error("sage_generate_whole: could not place a tumor after " +
                                         std::to_string(config.merges_per_phi_retry) + " tries");
        }
    }
    return out;
}

EvalReport run_experiment(const ExperimentConfig& config, const DatasetManifest& manifest,
                          const std::vector<FoldPlan>& folds,
                          FeatureExtractor<float>* extractor, RngHandle& rng) {
    if (folds.empty()) throw std::invalid_argument("run_experiment: no folds");
    if (config.source == ExperimentSource::sage && !extractor)
        throw std::invalid_argument("run_experiment: sage source requires a feature extractor");
    if (config.train_role != Role::tumor_crop && config.train_role != Role::whole_slice)
        throw std::invalid_argument("run_experiment: train on tumor_crop or whole_slice");

    EvalReport report;
    switch (config.source) {
        case ExperimentSource::real: report.source = "real"; break;
        case ExperimentSource::sage: report.source = "sage"; break;
        case ExperimentSource::external_dir: report.source = "external"; break;
    }

    std::vector<LabeledImage> external;
    if (config.source == ExperimentSource::external_dir)
        external = load_labeled_dir(config.external_dir);

    for (const auto& fold : folds) {
        fold.validate();
        const std::string fs = "fold" + std::to_string(fold.index);
        DatasetManifest test_manifest = manifest.filter_patients(fold.test_patients);
        DatasetManifest train_manifest = manifest.filter_patients(fold.train_patients);
        std::vector<LabeledImage> test = load_labeled_images(test_manifest, config.train_role);

        std::vector<LabeledImage> train;
        switch (config.source) {
            case ExperimentSource::real:
                train = load_labeled_images(train_manifest, config.train_role);
                break;
            case ExperimentSource::sage: {
                RngHandle gen_rng = rng.fork(fs + "/sage");
                train = config.train_role == Role::tumor_crop
                            ? sage_generate_crops(train_manifest, config.sage, *extractor,
                                                  config.synthetic_per_class, gen_rng)
                            : sage_generate_whole(train_manifest, config.sage, *extractor,
                                                  config.synthetic_per_class, gen_rng);
                break;
            }
            case ExperimentSource::external_dir: train = external; break;
        }

        RngHandle clf_rng = rng.fork(fs + "/classifier");
        Classifier clf = train_classifier(train, config.classifier, clf_rng);
        report.folds.push_back(evaluate_fold(clf, test));
    }
    report.finalize();
    return report;
}

// --- blind test --------------------------------------------------------------

BlindTestKey package_blind_test(const std::map<ClassLabel, std::vector<ImageGrid>>& real,
                                const std::map<ClassLabel, std::vector<ImageGrid>>& synthetic,
                                const std::map<ClassLabel, BlindCounts>& counts, RngHandle& rng,
                                const std::filesystem::path& out_dir) {
    BlindTestKey key;
    std::set<long> used_ids;
    auto fresh_id = [&]() {
        long id;
        do {
            id = static_cast<long>(rng.uniform_int(900000)) + 100000;
        } while (!used_ids.insert(id).second);
        return std::to_string(id);
    };

    for (const auto& [label, want] : counts) {
        auto real_it = real.find(label);
        auto syn_it = synthetic.find(label);
        const auto& real_pool = real_it == real.end() ? std::vector<ImageGrid>{} : real_it->second;
        const auto& syn_pool =
            syn_it == synthetic.end() ? std::vector<ImageGrid>{} : syn_it->second;
        if (static_cast<int>(real_pool.size()) < want.real ||
            static_cast<int>(syn_pool.size()) < want.synthetic)
            throw std::runtime_error("package_blind_test: not enough " + to_string(label) +
                                     " images");

        const std::filesystem::path class_dir = out_dir / to_string(label);
        std::filesystem::create_directories(class_dir);

        auto pick = [&](const std::vector<ImageGrid>& pool, int n) {
            std::vector<int> idx(pool.size());
            std::iota(idx.begin(), idx.end(), 0);
            rng.shuffle(idx);
            idx.resize(static_cast<size_t>(n));
            return idx;
        };
        for (int i : pick(real_pool, want.real)) {
            const std::string id = fresh_id();
            save_pgm(resize_bilinear(real_pool[static_cast<size_t>(i)], 100, 100),
                     class_dir / (id + ".pgm"));
            key.origin[to_string(label) + "/" + id] = "real";
        }
        for (int i : pick(syn_pool, want.synthetic)) {
            const std::string id = fresh_id();
            save_pgm(resize_bilinear(syn_pool[static_cast<size_t>(i)], 100, 100),
                     class_dir / (id + ".pgm"));
            key.origin[to_string(label) + "/" + id] = "synthetic";
        }
    }

    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "key.json");
    if (!out) throw std::runtime_error("package_blind_test: cannot write key file");
    out << nlohmann::json(key.origin).dump(2) << "\n";
    return key;
}

BlindTestKey load_blind_key(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_blind_key: cannot open " + path.string());
    BlindTestKey key;
    nlohmann::json j = nlohmann::json::parse(in);
    for (auto& [k, v] : j.items()) key.origin[k] = v.get<std::string>();
    return key;
}

BlindScore score_blind_test(const BlindTestKey& key,
                            const std::map<std::string, std::string>& responses) {
    if (key.origin.empty()) throw std::invalid_argument("score_blind_test: empty key");
    for (const auto& [id, answer] : responses) {
        if (!key.origin.count(id))
            throw std::runtime_error("score_blind_test: unknown identifier '" + id + "'");
        if (answer != "real" && answer != "fake")
            throw std::runtime_error("score_blind_test: answer must be real|fake, got '" + answer +
                                     "'");
    }

    int n_real = 0, n_syn = 0, correct = 0, syn_as_real = 0, real_as_fake = 0, said_real = 0,
        real_as_real = 0;
    for (const auto& [id, origin] : key.origin) {
        auto it = responses.find(id);
        if (it == responses.end())
            throw std::runtime_error("score_blind_test: missing response for '" + id + "'");
        const bool is_real = origin == "real";
        const bool says_real = it->second == "real";
        n_real += is_real;
        n_syn += !is_real;
        said_real += says_real;
        if (is_real == says_real) ++correct;
        if (!is_real && says_real) ++syn_as_real;
        if (is_real && !says_real) ++real_as_fake;
        if (is_real && says_real) ++real_as_real;
    }

    BlindScore s;
    const double total = static_cast<double>(key.origin.size());
    s.acc = correct / total;
    s.fpr = n_syn > 0 ? static_cast<double>(syn_as_real) / n_syn : 0.0;
    s.fnr = n_real > 0 ? static_cast<double>(real_as_fake) / n_real : 0.0;
    s.pr = said_real > 0 ? static_cast<double>(real_as_real) / said_real : 0.0;
    return s;
}

}  // namespace sage
