#pragma once

#include <cstdint>
#include <string_view>

namespace va {

// splitmix64 step; also used to derive stream seeds.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t hash_str(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    return splitmix64(s);
}

// xoshiro256++ with hand-rolled distributions so that streams are
// reproducible across standard libraries, not just within one build.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform in [0, n)
    uint64_t index(uint64_t n) { return next() % n; }

    bool chance(double p) { return uniform() < p; }

    // Independent stream derived from this stream's seed and a tag.
    Rng substream(std::string_view name, uint64_t a = 0, uint64_t b = 0) const {
        uint64_t h = mix_seed(seed_, hash_str(name));
        h = mix_seed(h, a);
        h = mix_seed(h, b);
        return Rng(h);
    }

    uint64_t seed() const { return seed_; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t seed_;
    uint64_t s_[4];
};

// Fisher-Yates with explicit draws; std::shuffle is implementation-defined.
template <class Vec>
void shuffle(Vec& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = size_t(rng.index(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace va
