#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "covec/common.hpp"

namespace covec {

// MSB-first bit sink backed by a byte vector.
class BitWriter {
public:
    void put_bit(unsigned bit) {
        if (bit_in_byte_ == 0) bytes_.push_back(0);
        if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> bit_in_byte_);
        bit_in_byte_ = (bit_in_byte_ + 1) % 8;
        ++bit_count_;
    }

    void put_bits(std::uint64_t value, unsigned count) {
        for (unsigned i = count; i-- > 0;) put_bit(static_cast<unsigned>((value >> i) & 1u));
    }

    // Order-0 exp-Golomb code for unsigned values.
    void put_uexp(std::uint64_t value) {
        const std::uint64_t v = value + 1;
        unsigned bits = 0;
        for (std::uint64_t t = v; t > 1; t >>= 1) ++bits;
        for (unsigned i = 0; i < bits; ++i) put_bit(0);
        put_bits(v, bits + 1);
    }

    // Signed values via the zigzag map 0,1,-1,2,-2,...
    void put_sexp(std::int64_t value) {
        const std::uint64_t mapped =
            value > 0 ? static_cast<std::uint64_t>(2 * value - 1) : static_cast<std::uint64_t>(-2 * value);
        put_uexp(mapped);
    }

    std::uint64_t bit_count() const { return bit_count_; }

    // Zero-padded to a whole number of bytes.
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    unsigned bit_in_byte_ = 0;
    std::uint64_t bit_count_ = 0;
};

// MSB-first bit source; running past the end raises IoError.
class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    unsigned get_bit() {
        if (pos_ >= bytes_.size() * 8)
            throw IoError("corrupt payload: bitstream truncated");
        const unsigned bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
        ++pos_;
        return bit;
    }

    std::uint64_t get_bits(unsigned count) {
        std::uint64_t v = 0;
        for (unsigned i = 0; i < count; ++i) v = (v << 1) | get_bit();
        return v;
    }

    std::uint64_t get_uexp() {
        unsigned zeros = 0;
        while (get_bit() == 0) {
            if (++zeros > 63) throw IoError("corrupt payload: malformed exp-Golomb code");
        }
        std::uint64_t v = 1;
        for (unsigned i = 0; i < zeros; ++i) v = (v << 1) | get_bit();
        return v - 1;
    }

    std::int64_t get_sexp() {
        const std::uint64_t mapped = get_uexp();
        return (mapped & 1u) ? static_cast<std::int64_t>((mapped + 1) / 2)
                             : -static_cast<std::int64_t>(mapped / 2);
    }

    std::uint64_t bits_consumed() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace covec
