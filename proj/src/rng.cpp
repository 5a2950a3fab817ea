#include "sage/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace sage {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

RngHandle::RngHandle(uint64_t seed, std::string stream_id)
    : seed_(seed), stream_id_(std::move(stream_id)) {
    // Mix seed and stream name into the initial state, then warm up so that
    // near-identical (seed, id) pairs decorrelate.
    state_ = seed_ ^ (fnv1a(stream_id_) * 0x9e3779b97f4a7c15ULL);
    for (int i = 0; i < 4; ++i) splitmix64(state_);
}

RngHandle RngHandle::fork(const std::string& sub) const {
    return RngHandle(seed_, stream_id_ + "/" + sub);
}

uint64_t RngHandle::next_u64() { return splitmix64(state_); }

double RngHandle::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngHandle::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

double RngHandle::normal(double mean, double stddev) {
    // Box-Muller, no spare caching: two uniforms per draw keeps the stream
    // position a pure function of the number of normal() calls.
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

int64_t RngHandle::uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("RngHandle::uniform_int: n must be > 0");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
}

bool RngHandle::bernoulli(double p) { return uniform01() < p; }

}  // namespace sage
