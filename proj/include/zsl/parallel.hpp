#pragma once

#include <cstdint>

namespace zsl {

/// Worker cap for OpenMP kernels. `jobs == 1` selects the serial code paths.
struct Parallelism {
    int jobs = 1;

    bool serial() const noexcept { return jobs <= 1; }
};

/// Applies `p.jobs` to the OpenMP runtime. Returns the previous value.
int set_jobs(int jobs);
int max_jobs();

/// SplitMix64 step: derives independent per-task seeds from one base seed,
/// so results do not depend on which thread ran which task.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace zsl
