#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "obpuf/rng.hpp"

namespace obpuf {

using Bit = std::uint8_t;
using BitVec = std::vector<Bit>;

// Challenges and responses are plain bit vectors; the owning device or
// pattern set defines the expected lengths.
using Challenge = BitVec;
using PartialChallenge = BitVec;

inline BitVec random_bits(Rng& rng, std::size_t n) {
    BitVec out(n);
    for (auto& b : out) b = static_cast<Bit>(rng() & 1u);
    return out;
}

inline std::size_t hd(std::span<const Bit> x, std::span<const Bit> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("hd: length mismatch");
    std::size_t d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] != y[i]);
    return d;
}

inline double fhd(std::span<const Bit> x, std::span<const Bit> y) {
    if (x.empty()) throw std::invalid_argument("fhd: empty strings");
    return static_cast<double>(hd(x, y)) / static_cast<double>(x.size());
}

inline BitVec xor_bits(std::span<const Bit> x, std::span<const Bit> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("xor_bits: length mismatch");
    BitVec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] ^ y[i];
    return out;
}

inline std::string to_string(std::span<const Bit> x) {
    std::string s(x.size(), '0');
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i]) s[i] = '1';
    return s;
}

inline BitVec from_string(const std::string& s) {
    BitVec out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '0' && s[i] != '1')
            throw std::invalid_argument("from_string: not a bit string");
        out[i] = (s[i] == '1');
    }
    return out;
}

// LSB-first packing; trailing pad bits are zero.
inline std::vector<std::uint8_t> pack_bits(std::span<const Bit> x) {
    std::vector<std::uint8_t> out((x.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return out;
}

inline BitVec unpack_bits(std::span<const std::uint8_t> bytes, std::size_t nbits) {
    BitVec out(nbits);
    for (std::size_t i = 0; i < nbits; ++i)
        out[i] = (bytes[i / 8] >> (i % 8)) & 1u;
    return out;
}

}  // namespace obpuf
