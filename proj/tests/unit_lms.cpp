#include <doctest.h>

#include <cmath>
#include <set>

#include "sage/lms.hpp"
#include "sage/nn_image.hpp"
#include "test_util.hpp"

using namespace sage;
using nn::Mat;
using nn::Vec;

namespace {

LmsConfig small_config() {
    LmsConfig cfg;
    cfg.latent_dim = 16;
    cfg.mask_h = 16;
    cfg.mask_w = 16;
    cfg.encoder_channels = {4, 8, 8};
    cfg.generator_hidden = {32, 64, 128};
    cfg.discriminator_channels = {4, 8, 8};
    cfg.batch_size = 4;
    cfg.epochs = 10;
    return cfg;
}

std::vector<BinaryMask> blob_masks(int n, int size, RngHandle& rng) {
    std::vector<BinaryMask> out;
    for (int i = 0; i < n; ++i)
        out.push_back(test::ellipse_mask(size, size, rng.uniform(3, size * 0.4),
                                         rng.uniform(3, size * 0.4), rng.uniform(-60, 60)));
    return out;
}

}  // namespace

TEST_CASE("encode: determinism, latent dimension, input sensitivity") {
    LmsConfig cfg = small_config();
    LmsModel model(cfg, RngHandle(60, "model"));
    ImageGrid a(16, 16, 0.0), b(16, 16, 1.0);

    Vec<float> za1 = model.encode(a);
    Vec<float> za2 = model.encode(a);
    CHECK(za1 == za2);
    CHECK(za1.size() == 16);
    CHECK(za1.allFinite());

    Vec<float> zb = model.encode(b);
    CHECK((za1 - zb).norm() > 0.0);

    ImageGrid wrong(8, 8, 0.0);
    CHECK_THROWS(model.encode(wrong));
}

TEST_CASE("sample_latent: degenerate probabilities and sources") {
    LmsConfig cfg = small_config();
    cfg.p_noise = 1.0;
    LmsModel model(cfg, RngHandle(61, "m"));
    LatentPool pool;
    pool.latents = Mat<float>::Random(16, 3);
    pool.sources = {ImageGrid(16, 16, 0.1), ImageGrid(16, 16, 0.5), ImageGrid(16, 16, 0.9)};

    RngHandle rng(62, "sample");
    for (int i = 0; i < 50; ++i) {
        LatentSample s = sample_latent(model, pool, rng);
        CHECK(s.source == LatentSource::noise);
        CHECK_FALSE(s.target.has_value());
    }

    LmsConfig cfg0 = small_config();
    cfg0.p_noise = 0.0;
    cfg0.jitter_sigma = 0.0;
    LmsModel model0(cfg0, RngHandle(61, "m"));
    LatentPool pool1;
    pool1.latents = Mat<float>::Random(16, 1);
    pool1.sources = {ImageGrid(16, 16, 0.25)};
    for (int i = 0; i < 20; ++i) {
        LatentSample s = sample_latent(model0, pool1, rng);
        CHECK(s.source == LatentSource::real);
        CHECK(Vec<float>(s.latent) == Vec<float>(pool1.latents.col(0)));
        REQUIRE(s.target.has_value());
        CHECK(s.target->pixels == pool1.sources[0].pixels);
    }

    LatentPool empty;
    CHECK_THROWS(sample_latent(model0, empty, rng));
}

TEST_CASE("sample_latent: noise fraction matches p_noise") {
    LmsConfig cfg = small_config();
    cfg.p_noise = 0.5;
    cfg.noise_through_encoder = false;  // keep the Monte Carlo cheap
    LmsModel model(cfg, RngHandle(63, "m"));
    LatentPool pool;
    pool.latents = Mat<float>::Random(16, 5);

    RngHandle rng(64, "mc");
    int noise = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i)
        noise += sample_latent(model, pool, rng).source == LatentSource::noise;
    const double frac = static_cast<double>(noise) / draws;
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
}

TEST_CASE("sample_latent: jittered pool keeps producing fresh latents") {
    LmsConfig cfg = small_config();
    cfg.p_noise = 0.0;
    cfg.jitter_sigma = 0.1;
    LmsModel model(cfg, RngHandle(65, "m"));
    LatentPool pool;
    pool.latents = Mat<float>::Random(16, 5);

    RngHandle rng(66, "growth");
    std::set<std::string> seen;
    for (int i = 0; i < 1000; ++i) {
        LatentSample s = sample_latent(model, pool, rng);
        std::string bits(reinterpret_cast<const char*>(s.latent.data()),
                         sizeof(float) * s.latent.size());
        seen.insert(bits);
    }
    CHECK(seen.size() == 1000);
}

TEST_CASE("lms_loss: switched terms") {
    LmsConfig cfg = small_config();
    LmsModel model(cfg, RngHandle(67, "m"));
    RngHandle rng(68, "loss");
    ImageGrid generated = test::random_image(16, 16, rng);
    Vec<float> z = Vec<float>::Zero(16);

    // indicator = 1: exactly the adversarial term, target ignored
    const double p = model.discriminate(generated);
    const double noise_loss = lms_loss(model, z, LatentSource::noise, std::nullopt, generated);
    CHECK(noise_loss == -std::log(p));
    ImageGrid decoy = test::random_image(16, 16, rng);
    CHECK(lms_loss(model, z, LatentSource::noise, decoy, generated) == noise_loss);

    // indicator = 0: pure reconstruction
    CHECK(lms_loss(model, z, LatentSource::real, generated, generated) == 0.0);
    ImageGrid zeros(16, 16, 0.0), ones(16, 16, 1.0);
    CHECK(lms_loss(model, z, LatentSource::real, zeros, ones) == 1.0);
    CHECK_THROWS(lms_loss(model, z, LatentSource::real, std::nullopt, generated));

    // literal objective variant: log(1 - D(G(z)))
    LmsConfig lit = small_config();
    lit.adversarial = AdversarialObjective::log_one_minus;
    LmsModel model2(lit, RngHandle(67, "m"));
    const double p2 = model2.discriminate(generated);
    CHECK(lms_loss(model2, z, LatentSource::noise, std::nullopt, generated) ==
          std::log(1.0 - p2));
}

TEST_CASE("lms_loss: real branch is independent of discriminator parameters") {
    LmsConfig cfg = small_config();
    LmsModel a(cfg, RngHandle(69, "m"));
    RngHandle rng(70, "x");
    ImageGrid target = test::random_image(16, 16, rng);
    ImageGrid generated = test::random_image(16, 16, rng);
    Vec<float> z = Vec<float>::Zero(16);
    const double before = lms_loss(a, z, LatentSource::real, target, generated);
    for (auto* prm : a.discriminator().params()) prm->value.array() += 0.37f;
    const double after = lms_loss(a, z, LatentSource::real, target, generated);
    CHECK(before == after);
}

TEST_CASE("train_lms: reconstruction overfits a repeated mask") {
    LmsConfig cfg = small_config();
    cfg.p_noise = 0.0;
    cfg.jitter_sigma = 0.0;
    cfg.epochs = 250;
    cfg.lr_generator = 2e-3;
    LmsModel model(cfg, RngHandle(71, "m"));

    BinaryMask mask = test::ellipse_mask(16, 16, 4, 6, 15.0);
    std::vector<BinaryMask> data(4, mask);
    RngHandle rng(72, "train");
    TrainHistory hist = train_lms(model, data, rng);
    CHECK(hist.final_reconstruction_loss < 1e-2);
    CHECK_FALSE(hist.steps.empty());
}

TEST_CASE("train_lms: deterministic under a fixed seed") {
    LmsConfig cfg = small_config();
    cfg.epochs = 6;
    RngHandle data_rng(73, "data");
    std::vector<BinaryMask> masks = blob_masks(6, 16, data_rng);

    LmsModel m1(cfg, RngHandle(74, "m"));
    LmsModel m2(cfg, RngHandle(74, "m"));
    RngHandle r1(75, "t"), r2(75, "t");
    train_lms(m1, masks, r1);
    train_lms(m2, masks, r2);

    auto p1 = m1.generator().params(), p2 = m2.generator().params();
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value == p2[i]->value);
    auto e1 = m1.encoder().params(), e2 = m2.encoder().params();
    for (size_t i = 0; i < e1.size(); ++i) CHECK(e1[i]->value == e2[i]->value);
    auto d1 = m1.discriminator().params(), d2 = m2.discriminator().params();
    for (size_t i = 0; i < d1.size(); ++i) CHECK(d1[i]->value == d2[i]->value);
}

TEST_CASE("train_lms: input validation") {
    LmsConfig cfg = small_config();
    LmsModel model(cfg, RngHandle(76, "m"));
    RngHandle rng(77, "t");
    std::vector<BinaryMask> one = {test::ellipse_mask(16, 16, 4, 4)};
    CHECK_THROWS(train_lms(model, one, rng));
    std::vector<BinaryMask> wrong(3, test::ellipse_mask(8, 8, 2, 2));
    CHECK_THROWS(train_lms(model, wrong, rng));
}

TEST_CASE("generate_masks: counts, non-emptiness, requires a pool") {
    LmsConfig cfg = small_config();
    cfg.epochs = 30;
    LmsModel model(cfg, RngHandle(78, "m"));
    RngHandle data_rng(79, "data");
    std::vector<BinaryMask> masks = blob_masks(8, 16, data_rng);
    RngHandle train_rng(80, "t");
    train_lms(model, masks, train_rng);

    RngHandle gen_rng(81, "g");
    CHECK(generate_masks(model, 0, gen_rng).empty());
    std::vector<BinaryMask> out = generate_masks(model, 50, gen_rng);
    CHECK(out.size() == 50);
    for (const auto& m : out) {
        CHECK(m.foreground_count() >= 1);
        CHECK(m.height == 16);
    }

    LmsModel fresh(cfg, RngHandle(82, "m"));
    CHECK_THROWS(generate_masks(fresh, 5, gen_rng));  // no latent pool yet
}

TEST_CASE("lms: checkpoint round trip is exact") {
    test::TempDir tmp("lmsckpt");
    LmsConfig cfg = small_config();
    cfg.epochs = 8;
    LmsModel model(cfg, RngHandle(83, "m"));
    RngHandle data_rng(84, "data");
    std::vector<BinaryMask> masks = blob_masks(5, 16, data_rng);
    RngHandle train_rng(85, "t");
    train_lms(model, masks, train_rng);

    save_lms_checkpoint(model, 83, tmp.path() / "lms.ckpt");
    LmsModel back = load_lms_checkpoint(tmp.path() / "lms.ckpt");

    auto pa = model.generator().params(), pb = back.generator().params();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
    CHECK(back.pool().latents == model.pool().latents);
    REQUIRE(back.pool().sources.size() == model.pool().sources.size());

    RngHandle g1(86, "gen"), g2(86, "gen");
    std::vector<BinaryMask> a = generate_masks(model, 8, g1);
    std::vector<BinaryMask> b = generate_masks(back, 8, g2);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].pixels == b[i].pixels);
}

TEST_CASE("generator output stays in [0,1] for wild latents") {
    LmsConfig cfg = small_config();
    LmsModel model(cfg, RngHandle(87, "m"));
    RngHandle rng(88, "z");
    for (int t = 0; t < 10; ++t) {
        Vec<float> z(16);
        for (int i = 0; i < 16; ++i) z[i] = static_cast<float>(rng.normal(0, 50));
        ImageGrid img = model.generate_image(z);
        for (double v : img.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}
