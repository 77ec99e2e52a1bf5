#include "lssa/rng.hpp"

namespace lssa {

std::uint64_t Rng::below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    // Largest multiple of n representable; draws above it are rejected.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t sub_seed(std::uint64_t master, std::uint64_t tag) noexcept {
    Rng r(master ^ tag);
    return r.next_u64();
}

std::uint64_t sub_seed(std::uint64_t master, std::string_view purpose) noexcept {
    return sub_seed(master, fnv1a64(purpose));
}

std::uint64_t sub_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index) noexcept {
    return sub_seed(sub_seed(master, purpose), index);
}

}  // namespace lssa
