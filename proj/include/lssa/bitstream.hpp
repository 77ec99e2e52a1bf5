#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lssa/rng.hpp"

namespace lssa {

/// Ordered bit sequence with a read cursor. Byte conversions are MSB-first.
class BitStream {
public:
    BitStream() = default;
    explicit BitStream(std::vector<std::uint8_t> bits);

    /// Parses a string of '0'/'1' characters.
    static BitStream from_string(std::string_view s);
    static BitStream from_bytes(std::span<const std::uint8_t> bytes);

    std::size_t size() const noexcept { return bits_.size(); }
    bool empty() const noexcept { return bits_.empty(); }
    std::size_t cursor() const noexcept { return cursor_; }
    std::size_t remaining() const noexcept { return bits_.size() - cursor_; }
    bool exhausted() const noexcept { return cursor_ >= bits_.size(); }

    std::uint8_t operator[](std::size_t i) const { return bits_.at(i); }
    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    void push_back(bool bit) { bits_.push_back(bit ? 1 : 0); }
    void append(const BitStream& other);

    /// Reads one bit; past the end yields 0 and sets *padded when given.
    std::uint8_t read_bit(bool* padded = nullptr) noexcept;

    /// Reads `count` bits as an MSB-first unsigned integer, zero-padding past
    /// the end. Returns the number of real (non-padding) bits in *real_bits.
    std::uint64_t read_uint(unsigned count, unsigned* real_bits = nullptr) noexcept;

    void rewind() noexcept { cursor_ = 0; }

    /// Packs into bytes, zero-padding the last byte.
    std::vector<std::uint8_t> to_bytes() const;
    std::string to_string() const;

    /// True if the first other.size() bits of this stream equal `other`.
    bool starts_with(const BitStream& other) const noexcept;

    bool operator==(const BitStream& o) const noexcept { return bits_ == o.bits_; }

private:
    std::vector<std::uint8_t> bits_;
    std::size_t cursor_ = 0;
};

/// n bits from `rng`: each 64-bit output word contributes its bits MSB-first.
BitStream rng_bits(Rng& rng, std::size_t n);

}  // namespace lssa
