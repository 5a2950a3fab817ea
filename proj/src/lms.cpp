#include "sage/lms.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sage/checkpoint.hpp"
#include "sage/nn_image.hpp"

namespace sage {

using nn::Mat;
using nn::Vec;

void LmsConfig::validate() const {
    if (latent_dim <= 0) throw std::invalid_argument("LmsConfig: latent_dim must be positive");
    if (mask_h < 8 || mask_w < 8 || mask_h % 8 != 0 || mask_w % 8 != 0)
        throw std::invalid_argument("LmsConfig: mask size must be a multiple of 8, at least 8");
    if (!(p_noise >= 0.0 && p_noise <= 1.0))
        throw std::invalid_argument("LmsConfig: p_noise must lie in [0,1]");
    if (jitter_sigma < 0) throw std::invalid_argument("LmsConfig: jitter_sigma must be >= 0");
    if (encoder_channels.size() != 3 || discriminator_channels.size() != 3)
        throw std::invalid_argument("LmsConfig: expected 3 conv stages");
    if (generator_hidden.size() != 3)
        throw std::invalid_argument("LmsConfig: expected 3 hidden generator widths");
    if (batch_size <= 0 || epochs < 0) throw std::invalid_argument("LmsConfig: bad training budget");
    if (lr_generator <= 0 || lr_discriminator <= 0)
        throw std::invalid_argument("LmsConfig: learning rates must be positive");
}

namespace {

nn::Sequential<float> build_encoder(const LmsConfig& cfg, RngHandle rng) {
    nn::Sequential<float> net({1, cfg.mask_h, cfg.mask_w});
    int in_c = 1;
    for (int c : cfg.encoder_channels) {
        net.emplace<nn::Conv2d<float>>(net.shape(), c, 3, 2, 1, rng);
        net.emplace<nn::LeakyReLU<float>>();
        in_c = c;
    }
    (void)in_c;
    net.emplace<nn::Dense<float>>(net.shape().size(), cfg.latent_dim, rng, nn::InitKind::xavier);
    return net;
}

nn::Sequential<float> build_generator(const LmsConfig& cfg, RngHandle rng) {
    nn::Sequential<float> net({cfg.latent_dim, 1, 1});
    for (int wdt : cfg.generator_hidden) {
        net.emplace<nn::Dense<float>>(net.shape().size(), wdt, rng);
        net.emplace<nn::ReLU<float>>();
    }
    net.emplace<nn::Dense<float>>(net.shape().size(), cfg.mask_h * cfg.mask_w, rng,
                                  nn::InitKind::xavier);
    net.emplace<nn::Sigmoid<float>>();
    return net;
}

nn::Sequential<float> build_discriminator(const LmsConfig& cfg, RngHandle rng) {
    nn::Sequential<float> net({1, cfg.mask_h, cfg.mask_w});
    for (int c : cfg.discriminator_channels) {
        net.emplace<nn::Conv2d<float>>(net.shape(), c, 3, 2, 1, rng);
        net.emplace<nn::LeakyReLU<float>>();
    }
    net.emplace<nn::Dense<float>>(net.shape().size(), 1, rng, nn::InitKind::xavier);
    return net;  // emits a logit; probabilities go through stable_sigmoid
}

}  // namespace

LmsModel::LmsModel(const LmsConfig& config, RngHandle rng) : config_(config) {
    config_.validate();
    encoder_ = build_encoder(config_, rng.fork("encoder"));
    generator_ = build_generator(config_, rng.fork("generator"));
    discriminator_ = build_discriminator(config_, rng.fork("discriminator"));
}

Vec<float> LmsModel::encode(const ImageGrid& input) {
    if (input.height != config_.mask_h || input.width != config_.mask_w)
        throw std::invalid_argument("encode: input is " + std::to_string(input.height) + "x" +
                                    std::to_string(input.width) + " but model expects " +
                                    std::to_string(config_.mask_h) + "x" +
                                    std::to_string(config_.mask_w));
    Mat<float> x = image_to_column<float>(input);
    return encoder_.forward(x, false).col(0);
}

Mat<float> LmsModel::encode_columns(const Mat<float>& rasters, bool train) {
    return encoder_.forward(rasters, train);
}

Mat<float> LmsModel::generate_columns(const Mat<float>& latents, bool train) {
    return generator_.forward(latents, train);
}

ImageGrid LmsModel::generate_image(const Vec<float>& latent) {
    Mat<float> y = generator_.forward(latent, false);
    ImageGrid img = column_to_image<float>(y.col(0), config_.mask_h, config_.mask_w);
    img.clamp01();  // sigmoid output, clamp only shields FP round-off
    return img;
}

double LmsModel::discriminate(const ImageGrid& image) {
    Mat<float> x = image_to_column<float>(image);
    const float logit = discriminator_.forward(x, false)(0, 0);
    const double p = nn::stable_sigmoid(static_cast<double>(logit));
    return std::clamp(p, 1e-7, 1.0 - 1e-7);
}

Mat<float> LmsModel::discriminate_logits(const Mat<float>& rasters, bool train) {
    return discriminator_.forward(rasters, train);
}

LatentSample sample_latent(LmsModel& model, const LatentPool& pool, RngHandle& rng) {
    const LmsConfig& cfg = model.config();
    if (pool.size() == 0) throw std::invalid_argument("sample_latent: empty latent pool");
    LatentSample out;
    if (rng.bernoulli(cfg.p_noise)) {
        out.source = LatentSource::noise;
        if (cfg.noise_through_encoder) {
            Mat<float> raster(cfg.mask_h * cfg.mask_w, 1);
            for (Eigen::Index i = 0; i < raster.rows(); ++i)
                raster(i, 0) = static_cast<float>(rng.normal());
            out.latent = model.encode_columns(raster, false).col(0);
        } else {
            out.latent.resize(cfg.latent_dim);
            for (int i = 0; i < cfg.latent_dim; ++i)
                out.latent[i] = static_cast<float>(rng.normal());
        }
        return out;
    }
    out.source = LatentSource::real;
    if (cfg.multiplex_mode == MultiplexMode::jitter) {
        const int j = static_cast<int>(rng.uniform_int(pool.size()));
        out.latent = pool.latents.col(j);
        for (int i = 0; i < cfg.latent_dim; ++i)
            out.latent[i] += static_cast<float>(cfg.jitter_sigma * rng.normal());
        if (!pool.sources.empty()) out.target = pool.sources[static_cast<size_t>(j)];
    } else {
        out.latent.resize(cfg.latent_dim);
        for (int i = 0; i < cfg.latent_dim; ++i)
            out.latent[i] = pool.latents(i, rng.uniform_int(pool.size()));
    }
    return out;
}

double lms_loss(LmsModel& model, const Vec<float>& latent, LatentSource source,
                const std::optional<ImageGrid>& target, const ImageGrid& generated) {
    (void)latent;  // the loss depends on the decoded image, kept for the op signature
    const LmsConfig& cfg = model.config();
    const bool reconstruction =
        source == LatentSource::real && cfg.multiplex_mode == MultiplexMode::jitter;
    if (reconstruction) {
        if (!target)
            throw std::invalid_argument("lms_loss: real-sourced latent requires a target image");
        if (target->height != generated.height || target->width != generated.width)
            throw std::invalid_argument("lms_loss: target/generated size mismatch");
        double acc = 0;
        for (size_t i = 0; i < generated.pixels.size(); ++i) {
            const double d = target->pixels[i] - generated.pixels[i];
            acc += d * d;
        }
        return acc / static_cast<double>(generated.pixels.size());
    }
    // indicator = 1: adversarial term only, numerically independent of any target
    const double p = model.discriminate(generated);
    if (cfg.adversarial == AdversarialObjective::non_saturating) return -std::log(p);
    return std::log(1.0 - p);
}

TrainHistory train_lms(LmsModel& model, const std::vector<BinaryMask>& masks, RngHandle& rng) {
    const LmsConfig& cfg = model.config();
    cfg.validate();
    if (masks.size() < 2) throw std::invalid_argument("train_lms: need at least 2 masks");
    for (const auto& m : masks)
        if (m.height != cfg.mask_h || m.width != cfg.mask_w)
            throw std::invalid_argument("train_lms: mask size does not match the model");

    const int N = static_cast<int>(masks.size());
    const int HW = cfg.mask_h * cfg.mask_w;
    std::vector<ImageGrid> mask_imgs;
    mask_imgs.reserve(masks.size());
    for (const auto& m : masks) mask_imgs.push_back(m.to_image());
    Mat<float> X = images_to_columns<float>(mask_imgs);

    std::vector<nn::Param<float>*> g_side = model.generator().params();
    for (auto* p : model.encoder().params()) g_side.push_back(p);
    nn::Adam<float> adam_g(g_side, cfg.lr_generator);
    nn::Adam<float> adam_d(model.discriminator().params(), cfg.lr_discriminator);

    RngHandle order_rng = rng.fork("order");
    RngHandle switch_rng = rng.fork("switch");
    RngHandle latent_rng = rng.fork("latent");

    std::vector<int> indices(N);
    std::iota(indices.begin(), indices.end(), 0);
    const int batch = std::min(cfg.batch_size, N);
    const int steps = (N + batch - 1) / batch;

    TrainHistory hist;
    int batch_counter = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Mat<float> z_pool = model.encode_columns(X, false);
        order_rng.shuffle(indices);

        for (int step = 0; step < steps; ++step) {
            const int lo = step * batch;
            const int b = std::min(batch, N - lo);

            Mat<float> xb(HW, b);
            for (int i = 0; i < b; ++i) xb.col(i) = X.col(indices[lo + i]);

            bool use_noise;
            switch (cfg.switch_schedule) {
                case SwitchSchedule::bernoulli:
                    use_noise = switch_rng.bernoulli(cfg.p_noise);
                    break;
                case SwitchSchedule::alternate:
                default:
                    if (cfg.p_noise <= 0.0)
                        use_noise = false;
                    else if (cfg.p_noise >= 1.0)
                        use_noise = true;
                    else
                        use_noise = batch_counter % 2 == 1;
                    break;
            }
            ++batch_counter;

            const bool reconstruction =
                !use_noise && cfg.multiplex_mode == MultiplexMode::jitter;

            Mat<float> z(cfg.latent_dim, b), targets;
            bool encoder_in_graph = false;
            if (use_noise) {
                if (cfg.noise_through_encoder) {
                    Mat<float> raster(HW, b);
                    for (Eigen::Index j = 0; j < raster.cols(); ++j)
                        for (Eigen::Index i = 0; i < raster.rows(); ++i)
                            raster(i, j) = static_cast<float>(latent_rng.normal());
                    z = model.encode_columns(raster, true);
                    encoder_in_graph = true;
                } else {
                    for (int j = 0; j < b; ++j)
                        for (int i = 0; i < cfg.latent_dim; ++i)
                            z(i, j) = static_cast<float>(latent_rng.normal());
                }
            } else if (cfg.multiplex_mode == MultiplexMode::jitter) {
                targets.resize(HW, b);
                for (int j = 0; j < b; ++j) {
                    const int pick = static_cast<int>(latent_rng.uniform_int(N));
                    z.col(j) = z_pool.col(pick);
                    for (int i = 0; i < cfg.latent_dim; ++i)
                        z(i, j) += static_cast<float>(cfg.jitter_sigma * latent_rng.normal());
                    targets.col(j) = X.col(pick);
                }
            } else {
                for (int j = 0; j < b; ++j)
                    for (int i = 0; i < cfg.latent_dim; ++i)
                        z(i, j) = z_pool(i, latent_rng.uniform_int(N));
            }

            // discriminator: real up, generated down
            model.discriminator().zero_grad();
            Mat<float> y_detached = model.generate_columns(z, false);
            Mat<float> dlogits;
            Mat<float> logits_real = model.discriminate_logits(xb, true);
            const double d_real = nn::bce_with_logits(logits_real, 1.0, &dlogits);
            model.discriminator().backward(dlogits);
            Mat<float> logits_fake = model.discriminate_logits(y_detached, true);
            const double d_fake = nn::bce_with_logits(logits_fake, 0.0, &dlogits);
            model.discriminator().backward(dlogits);
            adam_d.step();
            const double d_loss = d_real + d_fake;

            // generator (and encoder on the noise path)
            adam_g.zero_grad();
            Mat<float> y = model.generate_columns(z, true);
            double g_loss;
            Mat<float> dy;
            if (reconstruction) {
                Mat<float> diff = y - targets;
                const double n = static_cast<double>(diff.size());
                g_loss = static_cast<double>(diff.squaredNorm()) / n;
                dy = diff * static_cast<float>(2.0 / n);
            } else {
                model.discriminator().zero_grad();
                Mat<float> logits_g = model.discriminate_logits(y, true);
                Mat<float> dl(1, b);
                g_loss = 0;
                for (int j = 0; j < b; ++j) {
                    const float l = logits_g(0, j);
                    if (cfg.adversarial == AdversarialObjective::non_saturating) {
                        g_loss += nn::softplus(-static_cast<double>(l));
                        dl(0, j) = (nn::stable_sigmoid(l) - 1.0f) / static_cast<float>(b);
                    } else {
                        g_loss += -nn::softplus(static_cast<double>(l));
                        dl(0, j) = -nn::stable_sigmoid(l) / static_cast<float>(b);
                    }
                }
                g_loss /= b;
                dy = model.discriminator().backward(dl);
            }
            Mat<float> dz = model.generator().backward(dy);
            if (encoder_in_graph) model.encoder().backward(dz);
            adam_g.step();

            if (!std::isfinite(g_loss) || !std::isfinite(d_loss))
                throw std::runtime_error("train_lms: non-finite loss, training diverged");
            hist.steps.push_back({epoch, step, use_noise ? LatentSource::noise : LatentSource::real,
                                  d_loss, g_loss});
        }
    }

    LatentPool pool;
    pool.latents = model.encode_columns(X, false);
    pool.sources = mask_imgs;
    model.set_pool(std::move(pool));

    Mat<float> recon = model.generate_columns(model.pool().latents, false);
    hist.final_reconstruction_loss =
        static_cast<double>((recon - X).squaredNorm()) / static_cast<double>(X.size());
    return hist;
}

std::vector<BinaryMask> generate_masks(LmsModel& model, int n, RngHandle& rng) {
    if (n < 0) throw std::invalid_argument("generate_masks: negative count");
    if (model.pool().size() == 0)
        throw std::runtime_error("generate_masks: model has no latent pool (not trained?)");
    std::vector<BinaryMask> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        bool accepted = false;
        for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
            LatentSample s = sample_latent(model, model.pool(), rng);
            ImageGrid img = model.generate_image(s.latent);
            BinaryMask mask = binarize(img, 0.5);
            if (mask.foreground_count() > 0) {
                out.push_back(std::move(mask));
                accepted = true;
            }
        }
        if (!accepted)
            throw std::runtime_error(
                "generate_masks: persistent empty masks after 10 retries (failed training?)");
    }
    return out;
}

namespace {

nlohmann::json config_to_json(const LmsConfig& c) {
    return {{"latent_dim", c.latent_dim},
            {"mask_h", c.mask_h},
            {"mask_w", c.mask_w},
            {"p_noise", c.p_noise},
            {"jitter_sigma", c.jitter_sigma},
            {"multiplex_mode", c.multiplex_mode == MultiplexMode::jitter ? "jitter" : "coordinate_mix"},
            {"switch_schedule",
             c.switch_schedule == SwitchSchedule::bernoulli ? "bernoulli" : "alternate"},
            {"adversarial",
             c.adversarial == AdversarialObjective::non_saturating ? "non_saturating"
                                                                   : "log_one_minus"},
            {"noise_through_encoder", c.noise_through_encoder},
            {"encoder_channels", c.encoder_channels},
            {"generator_hidden", c.generator_hidden},
            {"discriminator_channels", c.discriminator_channels},
            {"lr_generator", c.lr_generator},
            {"lr_discriminator", c.lr_discriminator},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs}};
}

LmsConfig config_from_json(const nlohmann::json& j) {
    LmsConfig c;
    c.latent_dim = j.at("latent_dim").get<int>();
    c.mask_h = j.at("mask_h").get<int>();
    c.mask_w = j.at("mask_w").get<int>();
    c.p_noise = j.at("p_noise").get<double>();
    c.jitter_sigma = j.at("jitter_sigma").get<double>();
    c.multiplex_mode = j.at("multiplex_mode").get<std::string>() == "jitter"
                           ? MultiplexMode::jitter
                           : MultiplexMode::coordinate_mix;
    c.switch_schedule = j.at("switch_schedule").get<std::string>() == "bernoulli"
                            ? SwitchSchedule::bernoulli
                            : SwitchSchedule::alternate;
    c.adversarial = j.at("adversarial").get<std::string>() == "non_saturating"
                        ? AdversarialObjective::non_saturating
                        : AdversarialObjective::log_one_minus;
    c.noise_through_encoder = j.at("noise_through_encoder").get<bool>();
    c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    c.generator_hidden = j.at("generator_hidden").get<std::vector<int>>();
    c.discriminator_channels = j.at("discriminator_channels").get<std::vector<int>>();
    c.lr_generator = j.at("lr_generator").get<double>();
    c.lr_discriminator = j.at("lr_discriminator").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    return c;
}

void write_matrix(std::ostream& out, const Mat<float>& m) {
    const uint32_t rows = static_cast<uint32_t>(m.rows());
    const uint32_t cols = static_cast<uint32_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * m.size()));
}

Mat<float> read_matrix(std::istream& in) {
    uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    Mat<float> m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!in) throw std::runtime_error("checkpoint: truncated matrix");
    return m;
}

}  // namespace

void save_lms_checkpoint(const LmsModel& model, uint64_t seed,
                         const std::filesystem::path& path) {
    LmsModel& m = const_cast<LmsModel&>(model);  // params() is non-const only
    nlohmann::json header{{"config", config_to_json(model.config())}, {"seed", seed}};
    save_checkpoint(path, "lms", header, [&](std::ostream& out) {
        nn::write_params(out, m.encoder().params());
        nn::write_params(out, m.generator().params());
        nn::write_params(out, m.discriminator().params());
        write_matrix(out, model.pool().latents);
        const uint32_t n_src = static_cast<uint32_t>(model.pool().sources.size());
        out.write(reinterpret_cast<const char*>(&n_src), sizeof(n_src));
        for (const auto& img : model.pool().sources) {
            Mat<float> col = image_to_column<float>(img);
            write_matrix(out, col);
        }
    });
}

LmsModel load_lms_checkpoint(const std::filesystem::path& path) {
    std::ifstream in;
    nlohmann::json header = open_checkpoint(in, path, "lms");
    LmsConfig cfg = config_from_json(header.at("config"));
    LmsModel model(cfg, RngHandle(0, "lms-load"));
    nn::read_params(in, model.encoder().params());
    nn::read_params(in, model.generator().params());
    nn::read_params(in, model.discriminator().params());
    LatentPool pool;
    pool.latents = read_matrix(in);
    uint32_t n_src = 0;
    in.read(reinterpret_cast<char*>(&n_src), sizeof(n_src));
    for (uint32_t i = 0; i < n_src; ++i) {
        Mat<float> col = read_matrix(in);
        pool.sources.push_back(column_to_image<float>(col.col(0), cfg.mask_h, cfg.mask_w));
    }
    model.set_pool(std::move(pool));
    return model;
}

}  // namespace sage
