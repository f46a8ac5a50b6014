#pragma once
// Deterministic RNG used everywhere. Distribution code is hand-rolled on top of
// mt19937_64 so streams are reproducible across standard-library versions, and
// the full state (engine + Box-Muller spare) serialises into checkpoints.
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace symmetria {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    // derive an independent stream, e.g. per-example generation from (seed, index)
    static Rng substream(uint64_t seed, uint64_t index) {
        return Rng(splitmix64(seed ^ splitmix64(index + 0x51ed27f3a1b4c9d5ULL)));
    }

    uint64_t next_u64() { return eng_(); }

    double uniform() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    int64_t uniform_int(int64_t n) {  // [0, n), unbiased rejection sampling
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return static_cast<int64_t>(v % un);
    }

    double normal() {  // Box-Muller with cached spare
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0;
        while (u1 <= 0) u1 = uniform();  // avoid log(0)
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_ << " " << (has_spare_ ? 1 : 0) << " ";
        os.precision(17);
        os << spare_;
        return os.str();
    }
    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int hs = 0;
        is >> eng_ >> hs >> spare_;
        has_spare_ = hs != 0;
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace symmetria
