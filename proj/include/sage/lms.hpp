#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "sage/image.hpp"
#include "sage/nn.hpp"
#include "sage/rng.hpp"

namespace sage {

enum class MultiplexMode { jitter, coordinate_mix };
enum class LatentSource { real, noise };
enum class SwitchSchedule { bernoulli, alternate };
enum class AdversarialObjective { non_saturating, log_one_minus };

struct LmsConfig {
    int latent_dim = 128;
    int mask_h = 64;
    int mask_w = 64;
    double p_noise = 0.5;
    double jitter_sigma = 0.1;
    MultiplexMode multiplex_mode = MultiplexMode::jitter;
    SwitchSchedule switch_schedule = SwitchSchedule::bernoulli;
    AdversarialObjective adversarial = AdversarialObjective::non_saturating;
    // when false, noise latents are drawn directly in latent space instead of
    // passing a normal raster through the encoder
    bool noise_through_encoder = true;

    std::vector<int> encoder_channels = {8, 16, 32};
    std::vector<int> generator_hidden = {256, 512, 1024};
    std::vector<int> discriminator_channels = {8, 16, 32};

    double lr_generator = 2e-4;
    double lr_discriminator = 2e-4;
    int batch_size = 16;
    int epochs = 120;

    void validate() const;
};

// Encoded latents of the real training masks plus the masks themselves
// (reconstruction targets in jitter mode).
struct LatentPool {
    nn::Mat<float> latents;          // d x m
    std::vector<ImageGrid> sources;  // m images, may be empty for loaded pools
    int size() const { return static_cast<int>(latents.cols()); }
};

struct LatentSample {
    nn::Vec<float> latent;
    LatentSource source = LatentSource::noise;
    std::optional<ImageGrid> target;
};

// Encoder (image/noise raster -> latent), densely connected generator
// (latent -> mask raster through a sigmoid), strided-conv discriminator.
class LmsModel {
public:
    LmsModel(const LmsConfig& config, RngHandle rng);

    const LmsConfig& config() const { return config_; }

    // deterministic forward passes
    nn::Vec<float> encode(const ImageGrid& input);
    nn::Mat<float> encode_columns(const nn::Mat<float>& rasters, bool train = false);
    nn::Mat<float> generate_columns(const nn::Mat<float>& latents, bool train = false);
    ImageGrid generate_image(const nn::Vec<float>& latent);
    // probability that a raster is real, in (0,1)
    double discriminate(const ImageGrid& image);
    nn::Mat<float> discriminate_logits(const nn::Mat<float>& rasters, bool train = false);

    nn::Sequential<float>& encoder() { return encoder_; }
    nn::Sequential<float>& generator() { return generator_; }
    nn::Sequential<float>& discriminator() { return discriminator_; }

    const LatentPool& pool() const { return pool_; }
    void set_pool(LatentPool pool) { pool_ = std::move(pool); }

private:
    LmsConfig config_;
    nn::Sequential<float> encoder_, generator_, discriminator_;
    LatentPool pool_;
};

// Draws a latent per the multiplexing rule: with probability p_noise a
// standard-normal raster is encoded (source = noise); otherwise a pool member
// is re-sampled per the configured mode.
LatentSample sample_latent(LmsModel& model, const LatentPool& pool, RngHandle& rng);

// Switched loss: indicator = 1 (noise-sourced) selects the adversarial term,
// indicator = 0 selects mean squared error against the target.
double lms_loss(LmsModel& model, const nn::Vec<float>& latent, LatentSource source,
                const std::optional<ImageGrid>& target, const ImageGrid& generated);

struct TrainStepRecord {
    int epoch = 0;
    int step = 0;
    LatentSource source = LatentSource::noise;
    double d_loss = 0;
    double g_loss = 0;
};

struct TrainHistory {
    std::vector<TrainStepRecord> steps;
    double final_reconstruction_loss = 0;  // over the full dataset, jitter path
};

// Alternating discriminator / generator(+encoder) updates with the switched
// objective. Deterministic for a fixed rng in single-threaded builds.
TrainHistory train_lms(LmsModel& model, const std::vector<BinaryMask>& masks, RngHandle& rng);

// Samples latents (both sources permitted), decodes and binarizes at 0.5.
// Empty masks are resampled up to 10 times each before giving up.
std::vector<BinaryMask> generate_masks(LmsModel& model, int n, RngHandle& rng);

void save_lms_checkpoint(const LmsModel& model, uint64_t seed,
                         const std::filesystem::path& path);
LmsModel load_lms_checkpoint(const std::filesystem::path& path);

}  // namespace sage
