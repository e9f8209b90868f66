#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace vitfreeze {

// splitmix64: tiny, fast, well-mixed 64-bit generator.  Used both as the
// stream generator and to derive independent per-step / per-purpose seeds,
// so results do not depend on call interleaving across threads.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Mix a base seed with a stream id (e.g. step index, purpose tag) into a
// fresh independent seed.  Pure function of its inputs.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t s = base ^ (0x9e3779b97f4a7c15ull * (stream + 1));
    uint64_t z = splitmix64(s);
    // one extra round so adjacent streams decorrelate even for tiny bases
    return splitmix64(z);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; caches the second deviate
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // unbiased integer in [0, bound) via rejection
    uint64_t below(uint64_t bound) {
        if (bound == 0) return 0;
        uint64_t threshold = (0ull - bound) % bound;  // 2^64 mod bound
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Fisher-Yates shuffle
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace vitfreeze
