#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace blv {

/// SplitMix64 finalizer; used to derive independent stream seeds.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` of purpose `tag` under a master seed.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                                  std::uint64_t index) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index);
}

// Stream tags. Each consumer of randomness draws from its own tag so adding
// a new consumer never perturbs existing streams.
inline constexpr std::uint64_t kTagInit = 0x696e6974;
inline constexpr std::uint64_t kTagChain = 0x636861696e;
inline constexpr std::uint64_t kTagImportance = 0x69736d70;
inline constexpr std::uint64_t kTagSimulate = 0x73696d;
inline constexpr std::uint64_t kTagStudy = 0x7374756479;

/// Caller-owned random stream. Not thread-safe; give each thread its own.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t master, std::uint64_t tag, std::uint64_t index)
        : engine_(derive_seed(master, tag, index)) {}

    /// Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return normal_(engine_); }
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// log of a Gamma(shape, 1) variate; stays finite for tiny shapes where the
    /// variate itself would underflow.
    double log_gamma_variate(double shape) {
        if (shape >= 1.0) {
            std::gamma_distribution<double> g(shape, 1.0);
            return std::log(g(engine_));
        }
        std::gamma_distribution<double> g(shape + 1.0, 1.0);
        return std::log(g(engine_)) + std::log(uniform()) / shape;
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace blv
