#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace actsim {

/// splitmix64 step; used to derive well-separated child seeds.
inline uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (0x9e3779b97f4a7c15ULL + b);
    splitmix64(x);
    return splitmix64(x);
}

inline uint64_t hash_name(std::string_view name) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// One independent random stream. Streams are derived by name or index from
/// a parent seed, so every component of an experiment draws from its own
/// deterministic sequence regardless of call interleaving elsewhere.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : engine_(seed) {}

    double uniform() { return uni_(engine_); }
    double uniform(double a, double b) { return a + (b - a) * uni_(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    int uniform_int(int n) {  // in [0, n)
        return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(engine_));
    }
    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uni_{0.0, 1.0};
};

/// Node in the named seed tree: master -> replication -> component.
struct SeedNode {
    uint64_t seed;

    SeedNode child(uint64_t index) const { return SeedNode{mix_seed(seed, index)}; }
    SeedNode child(std::string_view name) const { return SeedNode{mix_seed(seed, hash_name(name))}; }
    RngStream stream() const { return RngStream(seed); }
    RngStream stream(std::string_view name) const { return child(name).stream(); }
};

}  // namespace actsim
