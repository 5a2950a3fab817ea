#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "sage/config.hpp"
#include "sage/pgm.hpp"
#include "sage/pipeline.hpp"

using namespace sage;

namespace {

KeyValueConfig load_kv(const std::string& config_path,
                       const std::vector<std::string>& overrides) {
    KeyValueConfig kv = config_path.empty() ? KeyValueConfig{}
                                            : KeyValueConfig::parse_file(config_path);
    for (const auto& kvpair : overrides) {
        const size_t eq = kvpair.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got '" + kvpair + "'");
        kv.set(kvpair.substr(0, eq), kvpair.substr(eq + 1));
    }
    return kv;
}

std::vector<ImageGrid> load_dir_images(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ImageGrid> out;
    for (const auto& f : files) out.push_back(load_pgm(f));
    if (out.empty()) throw std::runtime_error("no .pgm images in " + dir.string());
    return out;
}

std::vector<BinaryMask> load_dir_masks(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<BinaryMask> out;
    for (const auto& f : files) out.push_back(load_mask_pgm(f));
    if (out.empty()) throw std::runtime_error("no .pgm masks in " + dir.string());
    return out;
}

std::string pad4(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", i);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAGE: sequential attribute generation for limited tumor datasets"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    uint64_t seed_flag = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "key = value configuration file")
        ->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override a config key (key=value, repeatable)");
    app.add_option("--seed", seed_flag, "override the seed")->each([&](const std::string&) {
        seed_set = true;
    });

    auto run_config = [&]() {
        KeyValueConfig kv = load_kv(config_path, overrides);
        if (seed_set) kv.set("seed", std::to_string(seed_flag));
        return RunConfig::from_kv(kv);
    };

    // phantom
    auto* cmd_phantom = app.add_subcommand("phantom", "generate the procedural dataset");
    int ph_patients = 12, ph_images = 9, ph_size = 128, ph_crop = 64;
    double ph_strength = 0.8;
    std::string ph_out;
    cmd_phantom->add_option("--patients", ph_patients, "patients per class");
    cmd_phantom->add_option("--images", ph_images, "images per patient");
    cmd_phantom->add_option("--strength", ph_strength, "class feature strength in [0,1]");
    cmd_phantom->add_option("--image-size", ph_size, "slice size in pixels");
    cmd_phantom->add_option("--crop-size", ph_crop, "crop size in pixels");
    cmd_phantom->add_option("--out", ph_out, "output directory")->required();

    // make-extractor
    auto* cmd_ext = app.add_subcommand("make-extractor", "create frozen feature-extractor weights");
    std::string ext_out, ext_front = "filter_bank";
    int ext_input = 64, ext_channels = 1;
    std::vector<int> ext_widths = {12, 8, 12, 16, 16};
    std::vector<int> ext_pools = {0, 2, 3};
    cmd_ext->add_option("--out", ext_out, "checkpoint path")->required();
    cmd_ext->add_option("--input-size", ext_input, "input size in pixels");
    cmd_ext->add_option("--in-channels", ext_channels, "input channels (grayscale replicated)");
    cmd_ext->add_option("--widths", ext_widths, "channel widths of the five blocks")
        ->expected(5);
    cmd_ext->add_option("--pool-after", ext_pools, "block indices followed by a 2x2 pool");
    cmd_ext->add_option("--front-end", ext_front, "filter_bank|random first block");

    // train-shape
    auto* cmd_train = app.add_subcommand("train-shape", "train the LMS-GAN for one class");
    std::string ts_manifest, ts_out, ts_class = "control";
    cmd_train->add_option("--manifest", ts_manifest, "dataset manifest")->required();
    cmd_train->add_option("--class", ts_class, "control|mutated");
    cmd_train->add_option("--out", ts_out, "checkpoint path")->required();

    // gen-shapes
    auto* cmd_gen = app.add_subcommand("gen-shapes", "sample synthetic masks from a checkpoint");
    std::string gs_ckpt, gs_out;
    int gs_n = 100;
    cmd_gen->add_option("--ckpt", gs_ckpt, "LMS checkpoint")->required()->check(CLI::ExistingFile);
    cmd_gen->add_option("--n", gs_n, "number of masks");
    cmd_gen->add_option("--out", gs_out, "output directory")->required();

    // align
    auto* cmd_align = app.add_subcommand("align", "assign textures to synthetic masks");
    std::string al_masks, al_manifest, al_out, al_class = "control";
    cmd_align->add_option("--masks", al_masks, "directory of synthetic masks")->required();
    cmd_align->add_option("--textures", al_manifest, "manifest supplying the texture pool")
        ->required();
    cmd_align->add_option("--class", al_class, "control|mutated");
    cmd_align->add_option("--out", al_out, "output directory")->required();

    // estimate-stats
    auto* cmd_stats = app.add_subcommand("estimate-stats", "per-class placement statistics");
    std::string st_manifest, st_out;
    cmd_stats->add_option("--manifest", st_manifest, "dataset manifest")->required();
    cmd_stats->add_option("--out", st_out, "stats JSON path")->required();

    // merge
    auto* cmd_merge = app.add_subcommand("merge", "composite tumors onto pseudo-healthy slices");
    std::string mg_tumors, mg_manifest, mg_stats, mg_out, mg_class = "control";
    double mg_k = 2.0;
    int mg_n = 0;
    cmd_merge->add_option("--tumors", mg_tumors, "directory of synthetic tumor crops")->required();
    cmd_merge->add_option("--phis", mg_manifest, "manifest supplying pseudo-healthy images")
        ->required();
    cmd_merge->add_option("--stats", mg_stats, "stats JSON from estimate-stats")->required();
    cmd_merge->add_option("--k", mg_k, "attribute range half-width in stds");
    cmd_merge->add_option("--class", mg_class, "control|mutated");
    cmd_merge->add_option("--n", mg_n, "merged images to produce (0 = one per tumor)");
    cmd_merge->add_option("--out", mg_out, "output directory")->required();

    // score
    auto* cmd_score = app.add_subcommand("score", "IS and SSIM for a synthetic set");
    std::string sc_syn, sc_real, sc_clf, sc_out;
    int sc_pairs = 200;
    cmd_score->add_option("--synthetic", sc_syn, "directory of synthetic images")->required();
    cmd_score->add_option("--real", sc_real, "directory of real images")->required();
    cmd_score->add_option("--classifier", sc_clf, "classifier checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_score->add_option("--pairs", sc_pairs, "sampled SSIM pairs");
    cmd_score->add_option("--out", sc_out, "write the JSON report here (default stdout)");

    // evaluate
    auto* cmd_eval = app.add_subcommand("evaluate", "patient-wise k-fold classifier experiment");
    std::string ev_source = "real", ev_manifest, ev_report, ev_external;
    int ev_folds = 10;
    cmd_eval->add_option("--source", ev_source, "real|sage|dir");
    cmd_eval->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    cmd_eval->add_option("--folds", ev_folds, "number of folds");
    cmd_eval->add_option("--external-dir", ev_external, "synthetic set for source=dir");
    cmd_eval->add_option("--report", ev_report, "report output path")->required();

    // blindtest
    auto* cmd_blind = app.add_subcommand("blindtest", "package or score the blind test");
    auto* blind_pack = cmd_blind->add_subcommand("pack", "anonymize and package images");
    std::string bp_real, bp_syn, bp_out, bp_class = "control";
    int bp_nreal = 45, bp_nsyn = 47;
    blind_pack->add_option("--real", bp_real, "directory of real images")->required();
    blind_pack->add_option("--synthetic", bp_syn, "directory of synthetic images")->required();
    blind_pack->add_option("--real-count", bp_nreal, "real images to include");
    blind_pack->add_option("--syn-count", bp_nsyn, "synthetic images to include");
    blind_pack->add_option("--class", bp_class, "folder label");
    blind_pack->add_option("--out", bp_out, "bundle directory")->required();
    auto* blind_score = cmd_blind->add_subcommand("score", "score a response sheet");
    std::string bs_key, bs_resp;
    blind_score->add_option("--key", bs_key, "key.json from pack")->required()
        ->check(CLI::ExistingFile);
    blind_score->add_option("--responses", bs_resp, "JSON map id -> real|fake")->required()
        ->check(CLI::ExistingFile);

    // pipeline
    auto* cmd_pipe = app.add_subcommand("pipeline", "run the full sequence end to end");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_phantom) {
            PhantomSpec spec;
            spec.patients_per_class = ph_patients;
            spec.images_per_patient = ph_images;
            spec.image_size = ph_size;
            spec.crop_size = ph_crop;
            spec.class_feature_strength = ph_strength;
            RunConfig rc = run_config();
            DatasetManifest m =
                generate_phantom_dataset(spec, ph_out, RngHandle(rc.seed, "pipeline/phantom"));
            std::cout << "phantom: wrote " << m.entries.size() << " entries under " << ph_out
                      << "\n";
        } else if (*cmd_ext) {
            FeatureExtractor<float>::Arch arch;
            arch.input_size = ext_input;
            arch.in_channels = ext_channels;
            arch.widths = ext_widths;
            arch.convs_per_block = {1, 1, 1, 1, 1};
            arch.tap_blocks = {2, 3, 4};
            arch.pool_after = ext_pools;
            arch.front_end = ext_front == "random"
                                 ? FeatureExtractor<float>::FrontEnd::random
                                 : FeatureExtractor<float>::FrontEnd::filter_bank;
            RunConfig rc = run_config();
            FeatureExtractor<float> ext = make_extractor(arch, rc.seed);
            save_extractor_checkpoint(ext, rc.seed, ext_out);
            std::cout << "make-extractor: wrote " << ext_out << "\n";
        } else if (*cmd_train) {
            RunConfig rc = run_config();
            DatasetManifest manifest = load_manifest(ts_manifest);
            const ClassLabel label = class_label_from_string(ts_class);
            std::vector<BinaryMask> masks;
            for (const auto& e : manifest.select(label, Role::shape_mask)) {
                BinaryMask m = load_mask_pgm(manifest.resolve(e));
                if (m.height != rc.lms.mask_h || m.width != rc.lms.mask_w)
                    m = binarize(resize_bilinear(m.to_image(), rc.lms.mask_h, rc.lms.mask_w), 0.5);
                masks.push_back(std::move(m));
            }
            LmsModel model(rc.lms, RngHandle(rc.seed, "pipeline/lms-init/" + ts_class));
            RngHandle train_rng(rc.seed, "pipeline/lms-train/" + ts_class);
            TrainHistory hist = train_lms(model, masks, train_rng);
            save_lms_checkpoint(model, rc.seed, ts_out);
            std::cout << "train-shape: " << masks.size() << " masks, final reconstruction loss "
                      << hist.final_reconstruction_loss << ", wrote " << ts_out << "\n";
        } else if (*cmd_gen) {
            RunConfig rc = run_config();
            LmsModel model = load_lms_checkpoint(gs_ckpt);
            RngHandle rng(rc.seed, "pipeline/gen-shapes");
            std::vector<BinaryMask> masks = generate_masks(model, gs_n, rng);
            std::filesystem::create_directories(gs_out);
            for (size_t i = 0; i < masks.size(); ++i)
                save_mask_pgm(masks[i], std::filesystem::path(gs_out) /
                                            ("mask_" + pad4(static_cast<int>(i)) + ".pgm"));
            std::cout << "gen-shapes: wrote " << masks.size() << " masks to " << gs_out << "\n";
        } else if (*cmd_align) {
            RunConfig rc = run_config();
            FeatureExtractor<float> ext = load_extractor_checkpoint(rc.extractor_path);
            DatasetManifest manifest = load_manifest(al_manifest);
            const ClassLabel label = class_label_from_string(al_class);
            std::vector<ImageGrid> textures;
            for (const auto& e : manifest.select(label, Role::tumor_crop))
                textures.push_back(load_pgm(manifest.resolve(e)));
            std::vector<BinaryMask> masks = load_dir_masks(al_masks);
            RngHandle rng(rc.seed, "pipeline/align/" + al_class);
            std::vector<ImageGrid> tcs = align_textures(ext, masks, textures, rc.tan, rng);
            std::filesystem::create_directories(al_out);
            for (size_t i = 0; i < tcs.size(); ++i)
                save_pgm(tcs[i], std::filesystem::path(al_out) /
                                     ("syntc_" + pad4(static_cast<int>(i)) + ".pgm"));
            std::cout << "align: wrote " << tcs.size() << " crops to " << al_out << "\n";
        } else if (*cmd_stats) {
            DatasetManifest manifest = load_manifest(st_manifest);
            std::vector<AttributeStats> stats;
            for (ClassLabel label : {ClassLabel::control, ClassLabel::mutated})
                stats.push_back(estimate_stats(manifest, label));
            save_stats(stats, st_out);
            std::cout << "estimate-stats: wrote " << st_out << "\n";
        } else if (*cmd_merge) {
            RunConfig rc = run_config();
            DatasetManifest manifest = load_manifest(mg_manifest);
            const ClassLabel label = class_label_from_string(mg_class);
            std::vector<AttributeStats> all_stats = load_stats(mg_stats);
            const AttributeStats* stats = nullptr;
            for (const auto& s : all_stats)
                if (s.label == label) stats = &s;
            if (!stats) throw std::runtime_error("stats file has no entry for " + mg_class);
            std::vector<ImageGrid> tumors = load_dir_images(mg_tumors);
            std::vector<ImageGrid> phis;
            for (const auto& e : manifest.select(label, Role::pseudo_healthy))
                phis.push_back(load_pgm(manifest.resolve(e)));
            if (phis.empty()) throw std::runtime_error("no pseudo-healthy images for " + mg_class);
            RngHandle rng(rc.seed, "pipeline/merge/" + mg_class);
            const int n = mg_n > 0 ? mg_n : static_cast<int>(tumors.size());
            std::filesystem::create_directories(mg_out);
            for (int i = 0; i < n; ++i) {
                const ImageGrid& tc = tumors[static_cast<size_t>(i) % tumors.size()];
                BinaryMask support(tc.height, tc.width);
                for (size_t k = 0; k < tc.pixels.size(); ++k)
                    support.pixels[k] = tc.pixels[k] > 0.0 ? 1 : 0;
                bool ok = false;
                for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
                    PlacementSample pl =
                        sample_placement(*stats, mg_k, rng, rc.taper_sigma_px);
                    const ImageGrid& phi =
                        phis[static_cast<size_t>(rng.uniform_int(phis.size()))];
                    try {
                        save_pgm(merge(tc, support, phi, pl),
                                 std::filesystem::path(mg_out) / ("merged_" + pad4(i) + ".pgm"));
                        ok = true;
                    } catch (const std::runtime_error&) {
                    }
                }
                if (!ok) throw std::runtime_error("could not place tumor " + std::to_string(i));
            }
            std::cout << "merge: wrote " << n << " images to " << mg_out << "\n";
        } else if (*cmd_score) {
            RunConfig rc = run_config();
            Classifier clf = load_classifier_checkpoint(sc_clf);
            std::vector<ImageGrid> syn = load_dir_images(sc_syn);
            std::vector<ImageGrid> real = load_dir_images(sc_real);
            std::vector<ClassProbabilities> probs;
            for (const auto& img : syn) probs.push_back(clf.predict(img));
            RngHandle rng(rc.seed, "pipeline/score");
            nlohmann::json report{{"IS", inception_score(probs)},
                                  {"SSIM", mean_pairwise_ssim(syn, real, sc_pairs, rng)},
                                  {"synthetic_images", syn.size()},
                                  {"real_images", real.size()}};
            if (sc_out.empty()) {
                std::cout << report.dump(2) << "\n";
            } else {
                std::ofstream out(sc_out);
                out << report.dump(2) << "\n";
                std::cout << "score: wrote " << sc_out << "\n";
            }
        } else if (*cmd_eval) {
            RunConfig rc = run_config();
            DatasetManifest manifest = load_manifest(ev_manifest);
            RngHandle fold_rng(rc.seed, "pipeline/evaluate/folds");
            auto folds = make_folds(manifest, ev_folds, rc.eval_test_fraction, fold_rng);
            ExperimentConfig exp;
            if (ev_source == "real")
                exp.source = ExperimentSource::real;
            else if (ev_source == "sage")
                exp.source = ExperimentSource::sage;
            else if (ev_source == "dir")
                exp.source = ExperimentSource::external_dir;
            else
                throw std::runtime_error("evaluate: --source must be real|sage|dir");
            exp.train_role = rc.eval_role;
            exp.classifier = rc.classifier;
            exp.sage.lms = rc.lms;
            exp.sage.tan = rc.tan;
            exp.sage.merge_k = rc.merge_k;
            exp.sage.taper_sigma = rc.taper_sigma_px;
            exp.synthetic_per_class = rc.eval_synthetic_per_class;
            exp.external_dir = ev_external;

            std::optional<FeatureExtractor<float>> extractor;
            if (exp.source == ExperimentSource::sage)
                extractor.emplace(load_extractor_checkpoint(rc.extractor_path));
            RngHandle rng(rc.seed, "pipeline/evaluate/" + ev_source);
            EvalReport report = run_experiment(exp, manifest, folds,
                                               extractor ? &*extractor : nullptr, rng);
            report.save(ev_report);
            std::cout << report.table();
        } else if (*cmd_blind) {
            if (*blind_pack) {
                RunConfig rc = run_config();
                const ClassLabel label = class_label_from_string(bp_class);
                std::map<ClassLabel, std::vector<ImageGrid>> real{
                    {label, load_dir_images(bp_real)}};
                std::map<ClassLabel, std::vector<ImageGrid>> syn{
                    {label, load_dir_images(bp_syn)}};
                std::map<ClassLabel, BlindCounts> counts{{label, {bp_nreal, bp_nsyn}}};
                RngHandle rng(rc.seed, "pipeline/blindtest");
                BlindTestKey key = package_blind_test(real, syn, counts, rng, bp_out);
                std::cout << "blindtest pack: " << key.origin.size() << " images under " << bp_out
                          << "\n";
            } else if (*blind_score) {
                BlindTestKey key = load_blind_key(bs_key);
                std::ifstream in(bs_resp);
                nlohmann::json j = nlohmann::json::parse(in);
                std::map<std::string, std::string> responses;
                for (auto& [k, v] : j.items()) responses[k] = v.get<std::string>();
                BlindScore s = score_blind_test(key, responses);
                nlohmann::json out{{"ACC", s.acc}, {"FPR", s.fpr}, {"FNR", s.fnr}, {"PR", s.pr}};
                std::cout << out.dump(2) << "\n";
            } else {
                throw std::runtime_error("blindtest: expected pack or score");
            }
        } else if (*cmd_pipe) {
            RunConfig rc = run_config();
            const std::filesystem::path run_dir = pipeline_run(rc);
            std::cout << "pipeline: finished, artifacts under " << run_dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "sage: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
