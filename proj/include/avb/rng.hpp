#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace avb {

inline uint64_t split_mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    return split_mix64(a ^ split_mix64(b));
}

// mt19937_64 core with hand-mapped uniform/normal draws. The mt19937_64
// output sequence is pinned by the standard and the mappings below are
// explicit, so streams are identical across standard libraries. Do not
// swap in std::uniform_real_distribution / std::normal_distribution:
// their algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1), 53-bit mantissa
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Box-Muller, pair cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r  = std::sqrt(-2.0 * std::log1p(-u1));
        const double a  = 6.283185307179586 * u2;
        spare_      = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // uniform integer in [0, n), n > 0 (Lemire multiply-shift)
    uint64_t below(uint64_t n) {
        return uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace avb
