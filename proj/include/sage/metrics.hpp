#pragma once

#include <vector>

#include "sage/image.hpp"
#include "sage/rng.hpp"

namespace sage {

struct SsimParams {
    int window = 7;
    bool gaussian = false;  // uniform window by default
    double gaussian_sigma = 1.5;
    double dynamic_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

// Mean of the local SSIM map over all fully contained windows. Exactly 1 for
// identical images and symmetric in its arguments.
double ssim(const ImageGrid& x, const ImageGrid& y, const SsimParams& params = {});

using ClassProbabilities = std::vector<double>;

// exp of the mean KL divergence between per-image conditionals and the
// empirical marginal; lies in [1, number of classes].
double inception_score(const std::vector<ClassProbabilities>& probs);

// Mean SSIM over `pairs` uniformly sampled synthetic/real pairs, resized to a
// common size first.
double mean_pairwise_ssim(const std::vector<ImageGrid>& synthetic,
                          const std::vector<ImageGrid>& real, int pairs, RngHandle& rng,
                          const SsimParams& params = {});

}  // namespace sage
