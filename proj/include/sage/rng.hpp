#pragma once

#include <cstdint>
#include <string>
#include <utility>

namespace sage {

// Deterministic RNG with named sub-streams. The same (seed, stream_id) pair
// always replays the same draw sequence; all distribution transforms are
// implemented here rather than via std::*_distribution so sequences do not
// depend on the standard library build.
class RngHandle {
public:
    RngHandle() : RngHandle(0, "root") {}
    RngHandle(uint64_t seed, std::string stream_id);

    uint64_t seed() const { return seed_; }
    const std::string& stream_id() const { return stream_id_; }

    // Derives an independent stream "<stream_id>/<sub>" from the same seed.
    // Forks depend only on (seed, id), not on how far this stream has advanced.
    RngHandle fork(const std::string& sub) const;

    uint64_t next_u64();
    double uniform01();                       // [0, 1)
    double uniform(double lo, double hi);     // [lo, hi)
    double normal(double mean = 0.0, double stddev = 1.0);
    int64_t uniform_int(int64_t n);           // [0, n), n > 0
    bool bernoulli(double p);

    template <class Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_ = 0;
    std::string stream_id_;
    uint64_t state_ = 0;
};

}  // namespace sage
