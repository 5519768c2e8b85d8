#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace twophase {

// Deterministic random stream built on mt19937_64 with splitmix64-derived
// seeding. split(k) is a pure function of the stream's root seed, not of how
// much of the stream has been consumed, so per-replicate child streams give
// results that do not depend on scheduling or worker count.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : root_(seed), engine_(derive(seed, 0x6a09e667f3bcc908ULL)) {}

    Rng split(std::uint64_t stream) const { return Rng(derive(root_, stream)); }

    std::uint64_t root_seed() const { return root_; }

    std::uint64_t next_u64() { return engine_(); }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), unbiased
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal, Marsaglia polar method with cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

  private:
    static std::uint64_t splitmix(std::uint64_t& state) {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t state = seed;
        splitmix(state);
        state ^= 0xd1b54a32d192ed03ULL * (stream + 1);
        splitmix(state);
        return splitmix(state);
    }

    std::uint64_t root_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace twophase
