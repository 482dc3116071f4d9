#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace bosc {

// Deterministic xoshiro256++ generator seeded through splitmix64. The std::
// distributions are implementation-defined, so everything that needs a random
// draw goes through this class to keep runs byte-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniform_f() { return static_cast<float>(uniform()); }

    // Inclusive bounds.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Independent stream derived from the construction seed, not the evolving
    // state, so child streams do not depend on draw order.
    Rng child(std::uint64_t a, std::uint64_t b = 0) const {
        std::uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ULL * (a + 1));
        std::uint64_t y = splitmix64(x) ^ (0xbf58476d1ce4e5b9ULL * (b + 1));
        return Rng(splitmix64(y));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> state_{};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bosc
