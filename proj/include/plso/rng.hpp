#pragma once

#include <cstdint>
#include <random>

namespace plso {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded Gaussian source. Independent streams are derived from (seed, stream id)
// so results do not depend on the order in which streams are consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(splitmix64(seed) ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
    }

    double normal() { return normal_(engine_); }
    double normal(double stddev) { return stddev * normal_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace plso
