#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace pdd {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Each chain owns independent streams derived from base_seed + chain_index.
// Distinct tags keep sampler and backend randomness separate so that runs
// differing only in guidance parameters consume identical backend noise.
enum class stream_tag : uint64_t { sampler = 0x53414d50, backend = 0x4241434b };

inline uint64_t chain_stream_seed(uint64_t base_seed, uint64_t chain_index, stream_tag tag) {
    return splitmix64(splitmix64(base_seed + chain_index) ^ static_cast<uint64_t>(tag));
}

// Deterministic draws on top of std::mt19937_64. The std distribution
// objects are implementation-defined, so uniforms and normals are derived
// from raw bits directly; outputs are bit-identical across platforms.
class rng_stream {
  public:
    explicit rng_stream(uint64_t seed) : eng_(seed) {}

    double uniform() { // [0, 1)
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Box-Muller with one cached value.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_      = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::mt19937_64 eng_;
    bool   have_spare_ = false;
    double spare_      = 0.0;
};

// Inverse-CDF draw over token index order; ties broken by lower index.
// Zero-probability entries can never be selected.
inline int sample_categorical(std::span<const double> probs, double u) {
    double cum = 0.0;
    int last_positive = -1;
    for (size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] > 0.0) last_positive = static_cast<int>(j);
        cum += probs[j];
        if (u < cum && probs[j] > 0.0) return static_cast<int>(j);
    }
    return last_positive; // u landed in rounding slack past the last entry
}

} // namespace pdd
