#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace xsm {

// Deterministic RNG wrapper. All draws go through explicit transforms here so
// results do not depend on libstdc++'s distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double next_f64() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

    // uniform integer in [0, n)
    int64_t next_below(int64_t n) { return static_cast<int64_t>(next_f64() * static_cast<double>(n)); }

    // uniform in [lo, hi)
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_f64(); }

    // standard normal via Box-Muller (cached spare)
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = next_f64();
        } while (u1 <= 1e-300);
        const double u2 = next_f64();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t hash_str(std::string_view s, uint64_t salt = 0) {
    uint64_t h = fnv1a64(s.data(), s.size());
    return h ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
}

}  // namespace xsm
