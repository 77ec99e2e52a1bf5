#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace lssa {

/// SplitMix64 generator. The output stream depends only on the seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be positive. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) noexcept;

    bool bernoulli(double p) noexcept { return uniform() < p; }

    std::uint64_t state() const noexcept { return state_; }

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) noexcept {
        shuffle(std::span<T>(items));
    }

private:
    std::uint64_t state_;
};

/// FNV-1a 64-bit hash; turns purpose names into tags.
std::uint64_t fnv1a64(std::string_view s) noexcept;

/// First SplitMix64 output for state (master XOR tag).
std::uint64_t sub_seed(std::uint64_t master, std::uint64_t tag) noexcept;

/// sub_seed(master, fnv1a64(purpose)).
std::uint64_t sub_seed(std::uint64_t master, std::string_view purpose) noexcept;

/// sub_seed(sub_seed(master, purpose), index); used for per-epoch or per-text streams.
std::uint64_t sub_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index) noexcept;

}  // namespace lssa
