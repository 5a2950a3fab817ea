#include "sage/pipeline.hpp"

#include <fstream>
#include <stdexcept>

#include "sage/imgproc.hpp"
#include "sage/pgm.hpp"
#include "sage/pipeline.hpp"

namespace sage {

namespace {

constexpr const char* kVersion = "0.1.0";

std::string index_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", i);
    return buf;
}

}  // namespace

const std::vector<std::string>& pipeline_stage_names() {
    static const std::vector<std::string> names = {"train_shape", "shapes", "align", "stats",
                                                   "merge",       "score",  "evaluate"};
    return names;
}

std::filesystem::path pipeline_run(const RunConfig& config) {
    config.validate();  // fail fast, before any stage output exists

    const std::filesystem::path run_dir = config.out_root;
    std::filesystem::create_directories(run_dir);

    nlohmann::json provenance;
    provenance["version"] = kVersion;
    provenance["seed"] = config.seed;
    provenance["config"] = config.to_json();
    provenance["stages"] = nlohmann::json::array();
    auto note_stage = [&](const std::string& name, const std::vector<std::string>& inputs) {
        provenance["stages"].push_back({{"name", name}, {"inputs", inputs}});
        std::ofstream out(run_dir / "provenance.json");
        out << provenance.dump(2) << "\n";
    };

    RngHandle root(config.seed, "pipeline");
    const std::vector<ClassLabel> classes = {ClassLabel::control, ClassLabel::mutated};

    std::string stage = "setup";
    try {
        // dataset: generated phantom or an existing manifest
        DatasetManifest manifest;
        if (config.phantom_enabled) {
            stage = "phantom";
            manifest = generate_phantom_dataset(config.phantom, run_dir / "data",
                                                root.fork("phantom"));
            note_stage("phantom", {});
        } else {
            manifest = load_manifest(config.manifest_path);
        }

        FeatureExtractor<float> extractor = load_extractor_checkpoint(config.extractor_path);

        // 1. train the shape generators, one per class
        stage = "train_shape";
        const std::filesystem::path shape_dir = run_dir / "train_shape";
        std::filesystem::create_directories(shape_dir);
        std::map<ClassLabel, LmsModel> models;
        for (ClassLabel label : classes) {
            const std::string ls = to_string(label);
            std::vector<BinaryMask> masks;
            for (const auto& e : manifest.select(label, Role::shape_mask)) {
                BinaryMask m = load_mask_pgm(manifest.resolve(e));
                if (m.height != config.lms.mask_h || m.width != config.lms.mask_w)
                    m = binarize(
                        resize_bilinear(m.to_image(), config.lms.mask_h, config.lms.mask_w), 0.5);
                masks.push_back(std::move(m));
            }
            LmsModel model(config.lms, root.fork("lms-init/" + ls));
            RngHandle train_rng = root.fork("lms-train/" + ls);
            TrainHistory hist = train_lms(model, masks, train_rng);
            save_lms_checkpoint(model, config.seed, shape_dir / (ls + ".ckpt"));
            std::ofstream loss_out(shape_dir / (ls + "_loss.csv"));
            loss_out << "epoch,step,source,d_loss,g_loss\n";
            for (const auto& s : hist.steps)
                loss_out << s.epoch << "," << s.step << ","
                         << (s.source == LatentSource::noise ? "noise" : "real") << "," << s.d_loss
                         << "," << s.g_loss << "\n";
            models.emplace(label, std::move(model));
        }
        note_stage("train_shape", {"data"});

        // 2. sample synthetic masks
        stage = "shapes";
        std::map<ClassLabel, std::vector<BinaryMask>> syn_masks;
        for (ClassLabel label : classes) {
            const std::string ls = to_string(label);
            std::filesystem::create_directories(run_dir / "shapes" / ls);
            RngHandle gen_rng = root.fork("gen-shapes/" + ls);
            auto masks = generate_masks(models.at(label), config.shapes_per_class, gen_rng);
            for (size_t i = 0; i < masks.size(); ++i)
                save_mask_pgm(masks[i],
                              run_dir / "shapes" / ls / ("mask_" + index_name(static_cast<int>(i)) + ".pgm"));
            syn_masks.emplace(label, std::move(masks));
        }
        note_stage("shapes", {"train_shape"});

        // 3. texture alignment
        stage = "align";
        std::map<ClassLabel, std::vector<ImageGrid>> syn_tcs;
        for (ClassLabel label : classes) {
            const std::string ls = to_string(label);
            std::filesystem::create_directories(run_dir / "align" / ls);
            std::vector<ImageGrid> textures;
            for (const auto& e : manifest.select(label, Role::tumor_crop))
                textures.push_back(load_pgm(manifest.resolve(e)));
            RngHandle align_rng = root.fork("align/" + ls);
            auto tcs =
                align_textures(extractor, syn_masks.at(label), textures, config.tan, align_rng);
            for (size_t i = 0; i < tcs.size(); ++i)
                save_pgm(tcs[i],
                         run_dir / "align" / ls / ("syntc_" + index_name(static_cast<int>(i)) + ".pgm"));
            syn_tcs.emplace(label, std::move(tcs));
        }
        note_stage("align", {"shapes", "data"});

        // 4. placement statistics
        stage = "stats";
        std::filesystem::create_directories(run_dir / "stats");
        std::vector<AttributeStats> stats;
        for (ClassLabel label : classes) stats.push_back(estimate_stats(manifest, label));
        save_stats(stats, run_dir / "stats" / "stats.json");
        note_stage("stats", {"data"});

        // 5. merge onto pseudo-healthy slices
        stage = "merge";
        std::map<ClassLabel, std::vector<ImageGrid>> merged;
        for (size_t ci = 0; ci < classes.size(); ++ci) {
            const ClassLabel label = classes[ci];
            const std::string ls = to_string(label);
            std::filesystem::create_directories(run_dir / "merge" / ls);
            std::vector<ImageGrid> phis;
            for (const auto& e : manifest.select(label, Role::pseudo_healthy))
                phis.push_back(load_pgm(manifest.resolve(e)));
            if (phis.empty()) throw std::runtime_error("no pseudo-healthy images for " + ls);
            RngHandle merge_rng = root.fork("merge/" + ls);
            std::vector<ImageGrid> outs;
            const auto& tcs = syn_tcs.at(label);
            for (int i = 0; i < config.merged_per_class; ++i) {
                const ImageGrid& tc = tcs[static_cast<size_t>(i) % tcs.size()];
                BinaryMask support(tc.height, tc.width);
                for (size_t k = 0; k < tc.pixels.size(); ++k)
                    support.pixels[k] = tc.pixels[k] > 0.0 ? 1 : 0;
                bool ok = false;
                for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
                    PlacementSample pl = sample_placement(stats[ci], config.merge_k, merge_rng,
                                                          config.taper_sigma_px);
                    const ImageGrid& phi =
                        phis[static_cast<size_t>(merge_rng.uniform_int(phis.size()))];
                    try {
                        outs.push_back(merge(tc, support, phi, pl));
                        ok = true;
                    } catch (const std::runtime_error&) {
                        // placement rejected; redraw
                    }
                }
                if (!ok) throw std::runtime_error("could not place tumor after 20 attempts");
            }
            for (size_t i = 0; i < outs.size(); ++i)
                save_pgm(outs[i],
                         run_dir / "merge" / ls / ("merged_" + index_name(static_cast<int>(i)) + ".pgm"));
            merged.emplace(label, std::move(outs));
        }
        note_stage("merge", {"align", "stats", "data"});

        // 6. image-quality scoring
        stage = "score";
        std::filesystem::create_directories(run_dir / "score");
        {
            // classifier for the conditional label distribution, trained on real crops
            std::vector<LabeledImage> real_crops = load_labeled_images(manifest, Role::tumor_crop);
            RngHandle clf_rng = root.fork("score/classifier");
            Classifier clf = train_classifier(real_crops, config.classifier, clf_rng);
            save_classifier_checkpoint(clf, config.seed, run_dir / "score" / "classifier.ckpt");

            std::vector<ClassProbabilities> probs;
            std::vector<ImageGrid> all_syn;
            for (ClassLabel label : classes)
                for (const auto& img : syn_tcs.at(label)) {
                    probs.push_back(clf.predict(img));
                    all_syn.push_back(img);
                }
            const double is_value = inception_score(probs);

            std::vector<ImageGrid> real_tc_imgs;
            for (auto& li : real_crops) real_tc_imgs.push_back(li.image);
            RngHandle ssim_rng = root.fork("score/ssim");
            const double ssim_crops =
                mean_pairwise_ssim(all_syn, real_tc_imgs, config.ssim_pairs, ssim_rng);

            std::vector<ImageGrid> merged_all, real_slices;
            for (ClassLabel label : classes)
                for (const auto& img : merged.at(label)) merged_all.push_back(img);
            for (const auto& e : manifest.select(std::nullopt, Role::whole_slice))
                real_slices.push_back(load_pgm(manifest.resolve(e)));
            RngHandle ssim_rng2 = root.fork("score/ssim-merged");
            const double ssim_merged =
                mean_pairwise_ssim(merged_all, real_slices, config.ssim_pairs, ssim_rng2);

            nlohmann::json score{{"IS", is_value},
                                 {"SSIM", ssim_crops},
                                 {"SSIM_merged_vs_real", ssim_merged},
                                 {"synthetic_images", all_syn.size()}};
            std::ofstream out(run_dir / "score" / "report.json");
            out << score.dump(2) << "\n";
        }
        note_stage("score", {"align", "merge", "data"});

        // 7. downstream classifier evaluation (fixed test sets across sources)
        stage = "evaluate";
        std::filesystem::create_directories(run_dir / "evaluate");
        {
            RngHandle fold_rng = root.fork("evaluate/folds");
            auto folds = make_folds(manifest, config.eval_folds, config.eval_test_fraction,
                                    fold_rng);
            for (const std::string& source : config.eval_sources) {
                ExperimentConfig exp;
                exp.source =
                    source == "real" ? ExperimentSource::real : ExperimentSource::sage;
                exp.train_role = config.eval_role;
                exp.classifier = config.classifier;
                exp.sage.lms = config.lms;
                exp.sage.tan = config.tan;
                exp.sage.merge_k = config.merge_k;
                exp.sage.taper_sigma = config.taper_sigma_px;
                exp.synthetic_per_class = config.eval_synthetic_per_class;
                RngHandle exp_rng = root.fork("evaluate/" + source);
                EvalReport report = run_experiment(exp, manifest, folds, &extractor, exp_rng);
                report.save(run_dir / "evaluate" / ("report_" + source + ".txt"));
            }
        }
        note_stage("evaluate", {"data"});
    } catch (const std::exception& e) {
        throw std::runtime_error("pipeline stage '" + stage + "' failed: " + e.what());
    }

    return run_dir;
}

}  // namespace sage
