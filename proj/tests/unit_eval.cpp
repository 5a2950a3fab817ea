#include <doctest.h>

#include <cmath>
#include <set>

#include "sage/eval.hpp"
#include "sage/pgm.hpp"
#include "sage/phantom.hpp"
#include "test_util.hpp"

using namespace sage;

namespace {

DatasetManifest patients_manifest(const test::TempDir& tmp, int per_class) {
    DatasetManifest m;
    m.root = tmp.path();
    ImageGrid img(8, 8, 0.5);
    int k = 0;
    for (ClassLabel label : {ClassLabel::control, ClassLabel::mutated})
        for (int p = 0; p < per_class; ++p) {
            const std::string name = "img_" + std::to_string(k++) + ".pgm";
            save_pgm(img, tmp.path() / name);
            m.entries.push_back({to_string(label) + "_p" + std::to_string(p), label,
                                 Role::tumor_crop, name, std::nullopt});
        }
    return m;
}

LabeledImage labeled(double p_dummy, ClassLabel label, const std::string& pid) {
    (void)p_dummy;
    return {ImageGrid(8, 8, 0.5), label, pid};
}

}  // namespace

TEST_CASE("make_folds: sizes, disjointness, determinism") {
    test::TempDir tmp("folds");
    DatasetManifest m = patients_manifest(tmp, 10);

    RngHandle rng(100, "folds");
    auto folds = make_folds(m, 10, 0.2, rng);
    REQUIRE(folds.size() == 10);
    for (const auto& f : folds) {
        f.validate();
        int test_ctl = 0, test_mut = 0;
        for (const auto& p : f.test_patients) {
            test_ctl += p.rfind("control", 0) == 0;
            test_mut += p.rfind("mutated", 0) == 0;
        }
        CHECK(test_ctl == 2);  // 20% of 10 patients per class
        CHECK(test_mut == 2);
        CHECK(f.train_patients.size() == 16);
        CHECK(f.test_proportion.at(ClassLabel::control) == doctest::Approx(0.2));
    }

    RngHandle rng2(100, "folds");
    auto folds2 = make_folds(m, 10, 0.2, rng2);
    for (size_t i = 0; i < folds.size(); ++i) {
        CHECK(folds[i].train_patients == folds2[i].train_patients);
        CHECK(folds[i].test_patients == folds2[i].test_patients);
    }

    test::TempDir tmp2("folds2");
    DatasetManifest small = patients_manifest(tmp2, 4);
    RngHandle rng3(101, "folds");
    CHECK_THROWS(make_folds(small, 10, 0.2, rng3));
}

TEST_CASE("metrics_from_predictions: closed forms") {
    // perfect predictor
    std::vector<LabeledImage> test;
    std::vector<double> probs;
    for (int i = 0; i < 4; ++i) {
        test.push_back(labeled(0, ClassLabel::mutated, "m" + std::to_string(i)));
        probs.push_back(0.9);
        test.push_back(labeled(0, ClassLabel::control, "c" + std::to_string(i)));
        probs.push_back(0.1);
    }
    FoldMetrics perfect = metrics_from_predictions(probs, test);
    CHECK(perfect.acc_il == 1.0);
    CHECK(perfect.sen_il == 1.0);
    CHECK(perfect.spec_il == 1.0);
    CHECK(perfect.dic_il == 1.0);
    CHECK(perfect.acc_pl == 1.0);

    // precision 0.5, recall 1.0 -> dice 2/3 (TP=2, FP=2, TN=0, FN=0)
    std::vector<LabeledImage> t2 = {labeled(0, ClassLabel::mutated, "a"),
                                    labeled(0, ClassLabel::mutated, "b"),
                                    labeled(0, ClassLabel::control, "c"),
                                    labeled(0, ClassLabel::control, "d")};
    FoldMetrics half = metrics_from_predictions({0.9, 0.8, 0.7, 0.6}, t2);
    CHECK(half.tp == 2);
    CHECK(half.fp == 2);
    CHECK(half.dic_il == doctest::Approx(2.0 / 3.0));

    // fixed confusion layout TP=3 FP=1 TN=3 FN=1 -> all metrics 0.75
    std::vector<LabeledImage> t3;
    std::vector<double> p3;
    for (int i = 0; i < 3; ++i) {  // TP
        t3.push_back(labeled(0, ClassLabel::mutated, "tp" + std::to_string(i)));
        p3.push_back(0.8);
    }
    t3.push_back(labeled(0, ClassLabel::mutated, "fn"));
    p3.push_back(0.2);
    for (int i = 0; i < 3; ++i) {  // TN
        t3.push_back(labeled(0, ClassLabel::control, "tn" + std::to_string(i)));
        p3.push_back(0.2);
    }
    t3.push_back(labeled(0, ClassLabel::control, "fp"));
    p3.push_back(0.8);
    FoldMetrics fixed = metrics_from_predictions(p3, t3);
    CHECK(fixed.tp == 3);
    CHECK(fixed.fp == 1);
    CHECK(fixed.tn == 3);
    CHECK(fixed.fn == 1);
    CHECK(fixed.acc_il == doctest::Approx(0.75));
    CHECK(fixed.sen_il == doctest::Approx(0.75));
    CHECK(fixed.spec_il == doctest::Approx(0.75));
    CHECK(fixed.dic_il == doctest::Approx(0.75));
}

TEST_CASE("metrics_from_predictions: patient-level aggregation") {
    // one patient with mixed image calls: mean probability decides
    std::vector<LabeledImage> test = {labeled(0, ClassLabel::mutated, "p1"),
                                      labeled(0, ClassLabel::mutated, "p1"),
                                      labeled(0, ClassLabel::mutated, "p1"),
                                      labeled(0, ClassLabel::control, "p2")};
    FoldMetrics m = metrics_from_predictions({0.9, 0.8, 0.1, 0.2}, test);
    CHECK(m.acc_pl == 1.0);  // mean(0.9,0.8,0.1)=0.6 -> mutated; p2 -> control

    FoldMetrics m2 = metrics_from_predictions({0.9, 0.1, 0.1, 0.2}, test);
    CHECK(m2.acc_pl == 0.5);  // mean 0.3667 -> control: wrong for p1
}

TEST_CASE("train_classifier: separable toy problem") {
    RngHandle rng(102, "toy");
    std::vector<LabeledImage> train;
    for (int i = 0; i < 20; ++i) {
        ImageGrid bright(16, 16, 0.8), dark(16, 16, 0.2);
        for (auto& v : bright.pixels) v += rng.uniform(-0.05, 0.05);
        for (auto& v : dark.pixels) v += rng.uniform(-0.05, 0.05);
        train.push_back({bright, ClassLabel::mutated, "m" + std::to_string(i)});
        train.push_back({dark, ClassLabel::control, "c" + std::to_string(i)});
    }
    ClassifierConfig cfg;
    cfg.input_size = 16;
    cfg.channels = {4, 8, 8};
    cfg.learning_rate = 1e-3;
    cfg.epochs = 20;
    cfg.batch_size = 8;

    RngHandle train_rng(103, "clf");
    std::vector<double> history;
    Classifier clf = train_classifier(train, cfg, train_rng, &history);
    CHECK(history.size() == 20);
    CHECK(history.back() < history.front());

    FoldMetrics m = evaluate_fold(clf, train);
    CHECK(m.acc_il >= 0.99);

    for (int i = 0; i < 5; ++i) {
        ClassProbabilities p = clf.predict(train[static_cast<size_t>(i)].image);
        CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-6);
        CHECK(p[0] >= 0.0);
        CHECK(p[1] >= 0.0);
    }

    // single-class training set rejected
    std::vector<LabeledImage> single(train.begin(), train.begin() + 1);
    RngHandle r2(104, "clf");
    CHECK_THROWS(train_classifier(single, cfg, r2));
}

TEST_CASE("train_classifier: deterministic and checkpointable") {
    test::TempDir tmp("clf");
    RngHandle rng(105, "toy");
    std::vector<LabeledImage> train;
    for (int i = 0; i < 8; ++i) {
        train.push_back({test::random_image(16, 16, rng), ClassLabel::mutated, "m"});
        train.push_back({test::random_image(16, 16, rng), ClassLabel::control, "c"});
    }
    ClassifierConfig cfg;
    cfg.input_size = 16;
    cfg.channels = {4, 8, 8};
    cfg.epochs = 5;
    cfg.batch_size = 4;

    RngHandle r1(106, "clf"), r2(106, "clf");
    Classifier a = train_classifier(train, cfg, r1);
    Classifier b = train_classifier(train, cfg, r2);
    auto pa = a.net().params(), pb = b.net().params();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

    save_classifier_checkpoint(a, 106, tmp.path() / "clf.ckpt");
    Classifier c = load_classifier_checkpoint(tmp.path() / "clf.ckpt");
    ImageGrid probe = test::random_image(16, 16, rng);
    CHECK(a.predict(probe) == c.predict(probe));

    // pretrained initialization flag loads those weights
    ClassifierConfig warm = cfg;
    warm.pretrained_init_path = (tmp.path() / "clf.ckpt").string();
    Classifier d(warm, RngHandle(1, "other-seed"));
    CHECK(d.predict(probe) == a.predict(probe));
}

TEST_CASE("blind test: packaging and forced-choice arithmetic") {
    test::TempDir tmp("blind");
    RngHandle rng(107, "blind");
    std::vector<ImageGrid> real_pool, syn_pool;
    for (int i = 0; i < 50; ++i) real_pool.push_back(test::random_image(12, 12, rng));
    for (int i = 0; i < 50; ++i) syn_pool.push_back(test::random_image(12, 12, rng));

    std::map<ClassLabel, std::vector<ImageGrid>> real{{ClassLabel::control, real_pool}};
    std::map<ClassLabel, std::vector<ImageGrid>> syn{{ClassLabel::control, syn_pool}};
    std::map<ClassLabel, BlindCounts> counts{{ClassLabel::control, {45, 47}}};

    BlindTestKey key = package_blind_test(real, syn, counts, rng, tmp.path() / "bundle");
    CHECK(key.origin.size() == 92);

    int files = 0;
    for (const auto& e :
         std::filesystem::directory_iterator(tmp.path() / "bundle" / "control")) {
        ++files;
        ImageGrid img = load_pgm(e.path());
        CHECK(img.height == 100);
        CHECK(img.width == 100);
    }
    CHECK(files == 92);
    CHECK(std::filesystem::exists(tmp.path() / "bundle" / "key.json"));

    BlindTestKey loaded = load_blind_key(tmp.path() / "bundle" / "key.json");
    CHECK(loaded.origin == key.origin);

    // the all-"real" responder
    std::map<std::string, std::string> all_real;
    for (const auto& [id, origin] : key.origin) all_real[id] = "real";
    BlindScore s = score_blind_test(key, all_real);
    CHECK(s.acc == doctest::Approx(45.0 / 92.0));
    CHECK(s.fpr == 1.0);
    CHECK(s.fnr == 0.0);
    CHECK(s.pr == doctest::Approx(45.0 / 92.0));

    // the key scores itself perfectly
    std::map<std::string, std::string> perfect;
    for (const auto& [id, origin] : key.origin)
        perfect[id] = origin == "real" ? "real" : "fake";
    BlindScore sp = score_blind_test(key, perfect);
    CHECK(sp.acc == 1.0);
    CHECK(sp.fpr == 0.0);
    CHECK(sp.fnr == 0.0);
    CHECK(sp.pr == 1.0);

    // missing and unknown identifiers are rejected
    std::map<std::string, std::string> missing = all_real;
    missing.erase(missing.begin()->first);
    CHECK_THROWS(score_blind_test(key, missing));
    std::map<std::string, std::string> unknown = all_real;
    unknown["control/000000"] = "real";
    CHECK_THROWS(score_blind_test(key, unknown));

    // insufficient pool
    std::map<ClassLabel, BlindCounts> too_many{{ClassLabel::control, {60, 47}}};
    RngHandle rng2(108, "blind");
    CHECK_THROWS(package_blind_test(real, syn, too_many, rng2, tmp.path() / "b2"));
}

TEST_CASE("blind test: fixed 10-item response sheet") {
    BlindTestKey key;
    for (int i = 0; i < 5; ++i) key.origin["c/" + std::to_string(i)] = "real";
    for (int i = 5; i < 10; ++i) key.origin["c/" + std::to_string(i)] = "synthetic";
    std::map<std::string, std::string> resp;
    // 4 of 5 reals marked real (1 FN), 2 of 5 synthetics marked real (2 FP)
    resp["c/0"] = "real";
    resp["c/1"] = "real";
    resp["c/2"] = "real";
    resp["c/3"] = "real";
    resp["c/4"] = "fake";
    resp["c/5"] = "real";
    resp["c/6"] = "real";
    resp["c/7"] = "fake";
    resp["c/8"] = "fake";
    resp["c/9"] = "fake";
    BlindScore s = score_blind_test(key, resp);
    CHECK(s.acc == doctest::Approx(7.0 / 10.0));   // 4 real-correct + 3 fake-correct
    CHECK(s.fpr == doctest::Approx(2.0 / 5.0));
    CHECK(s.fnr == doctest::Approx(1.0 / 5.0));
    CHECK(s.pr == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("run_experiment: real source on a tiny phantom set") {
    test::TempDir tmp("exp");
    PhantomSpec spec;
    spec.patients_per_class = 6;
    spec.images_per_patient = 3;
    spec.image_size = 96;
    spec.crop_size = 48;
    spec.class_feature_strength = 1.0;
    DatasetManifest m = generate_phantom_dataset(spec, tmp.path(), RngHandle(110, "ds"));

    RngHandle fold_rng(111, "folds");
    auto folds = make_folds(m, 2, 0.2, fold_rng);

    ExperimentConfig cfg;
    cfg.source = ExperimentSource::real;
    cfg.classifier.input_size = 48;
    cfg.classifier.channels = {6, 12, 24};
    cfg.classifier.learning_rate = 1e-3;
    cfg.classifier.epochs = 12;
    cfg.classifier.batch_size = 16;

    RngHandle rng(112, "exp");
    EvalReport report = run_experiment(cfg, m, folds, nullptr, rng);
    REQUIRE(report.folds.size() == 2);
    for (const auto& f : report.folds) {
        CHECK(f.acc_il >= 0.0);
        CHECK(f.acc_il <= 1.0);
        CHECK(f.acc_pl >= 0.0);
        CHECK(f.acc_pl <= 1.0);
    }
    CHECK(report.acc_il.std >= 0.0);
    CHECK_FALSE(report.table().empty());

    test::TempDir rep("report");
    report.save(rep.path() / "report.txt");
    CHECK(std::filesystem::exists(rep.path() / "report.txt"));
    CHECK(std::filesystem::exists(rep.path() / "report.txt.json"));
}
