#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace pcdiff {

// Seeded stream with portable draws. std distributions are implementation
// defined and normal_distribution caches a spare value, so draws are built
// directly on the engine output and the whole state is the engine state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);
    // Standard normal (Box-Muller, one value per call).
    double normal();

    std::string state() const;
    void set_state(const std::string& text);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

// Stateless seed derivation for independent sub-streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pcdiff
