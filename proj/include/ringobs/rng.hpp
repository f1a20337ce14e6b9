#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ringobs {

// Seeded random stream. The engine is std::mt19937_64 (output sequence is
// fixed by the standard); the uniform/normal transforms are spelled out here
// so draws are bit-reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1).
    double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1].
    double uniform_pos() { return ((eng_() >> 11) + 1) * 0x1.0p-53; }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n), n >= 1.
    uint64_t below(uint64_t n) { return eng_() % n; }

    // Fisher-Yates; spelled out so the permutation is implementation-independent.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive a decorrelated child seed (splitmix64 finalizer over seed ^ tag).
    static uint64_t mix(uint64_t seed, uint64_t tag) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ringobs
