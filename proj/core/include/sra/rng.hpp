#pragma once

#include <cstdint>
#include <random>

namespace sra {

/// Seeded random stream. Independent streams are derived from
/// (seed, stream, index) so that e.g. each training step or each sample
/// owns a reproducible generator regardless of execution order.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

    /// Uniform on [0, 1).
    double uniform();
    double normal();
    /// Uniform integer on [lo, hi).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Well-known stream identifiers.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t train_step = 2;
inline constexpr std::uint64_t shuffle = 3;
inline constexpr std::uint64_t sample = 4;
inline constexpr std::uint64_t features = 5;
inline constexpr std::uint64_t probe = 6;
inline constexpr std::uint64_t projection = 7;
inline constexpr std::uint64_t dataset = 8;
}  // namespace streams

}  // namespace sra
