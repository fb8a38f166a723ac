#include "sra/rng.hpp"

#include <stdexcept>

namespace sra {

namespace {
std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}
}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seeded_engine(seed, 0, 0)) {}

Rng::Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
    : engine_(seeded_engine(seed, stream, index)) {}

double Rng::uniform() {
    // 53 random mantissa bits; never returns 1.0.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() { return normal_(engine_); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) throw std::invalid_argument("uniform_int: empty range");
    std::uniform_int_distribution<std::int64_t> dist(lo, hi - 1);
    return dist(engine_);
}

}  // namespace sra
