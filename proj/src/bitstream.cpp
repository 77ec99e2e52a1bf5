#include "lssa/bitstream.hpp"

#include <algorithm>

#include "lssa/error.hpp"

namespace lssa {

BitStream::BitStream(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_)
        if (b > 1) throw ConfigError("BitStream: values must be 0 or 1");
}

BitStream BitStream::from_string(std::string_view s) {
    BitStream out;
    out.bits_.reserve(s.size());
    for (char c : s) {
        if (c != '0' && c != '1') throw ConfigError("BitStream: invalid bit character");
        out.bits_.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    return out;
}

BitStream BitStream::from_bytes(std::span<const std::uint8_t> bytes) {
    BitStream out;
    out.bits_.reserve(bytes.size() * 8);
    for (std::uint8_t byte : bytes)
        for (int i = 7; i >= 0; --i) out.bits_.push_back(static_cast<std::uint8_t>((byte >> i) & 1));
    return out;
}

void BitStream::append(const BitStream& other) {
    bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
}

std::uint8_t BitStream::read_bit(bool* padded) noexcept {
    if (cursor_ >= bits_.size()) {
        if (padded) *padded = true;
        return 0;
    }
    if (padded) *padded = false;
    return bits_[cursor_++];
}

std::uint64_t BitStream::read_uint(unsigned count, unsigned* real_bits) noexcept {
    std::uint64_t v = 0;
    unsigned real = 0;
    for (unsigned i = 0; i < count; ++i) {
        bool pad = false;
        v = (v << 1) | read_bit(&pad);
        if (!pad) ++real;
    }
    if (real_bits) *real_bits = real;
    return v;
}

std::vector<std::uint8_t> BitStream::to_bytes() const {
    std::vector<std::uint8_t> out((bits_.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    return out;
}

std::string BitStream::to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) s.push_back(static_cast<char>('0' + b));
    return s;
}

bool BitStream::starts_with(const BitStream& other) const noexcept {
    if (other.size() > size()) return false;
    return std::equal(other.bits_.begin(), other.bits_.end(), bits_.begin());
}

BitStream rng_bits(Rng& rng, std::size_t n) {
    std::vector<std::uint8_t> bits;
    bits.reserve(n);
    while (bits.size() < n) {
        const std::uint64_t word = rng.next_u64();
        for (int i = 63; i >= 0 && bits.size() < n; --i)
            bits.push_back(static_cast<std::uint8_t>((word >> i) & 1));
    }
    return BitStream(std::move(bits));
}

}  // namespace lssa
