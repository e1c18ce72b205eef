#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "obpuf/bits.hpp"

namespace obpuf {

// Length-prefixed frames: 4-byte little-endian payload length, then the
// payload. Payload starts with a one-byte message kind; bit fields are packed
// LSB-first and padded to byte boundaries with zero bits.
enum class MsgKind : std::uint8_t {
    SessionInit = 1,
    Challenge = 2,
    Response = 3,
    Decision = 4,
};

struct SessionInitMsg {
    std::uint64_t session_id = 0;
    std::uint16_t challenge_bits = 0;  // k - m
    std::uint16_t rounds = 0;          // n
    std::vector<PartialChallenge> reconfig_challenges;
    bool operator==(const SessionInitMsg&) const = default;
};

struct ChallengeMsg {
    std::uint16_t round = 0;
    PartialChallenge challenge;
    bool operator==(const ChallengeMsg&) const = default;
};

struct ResponseMsg {
    std::uint16_t round = 0;
    BitVec response;
    bool operator==(const ResponseMsg&) const = default;
};

struct DecisionMsg {
    bool accept = false;
    std::uint16_t mismatches = 0;
    bool operator==(const DecisionMsg&) const = default;
};

using Message = std::variant<SessionInitMsg, ChallengeMsg, ResponseMsg, DecisionMsg>;

struct DecodeError {
    std::size_t offset = 0;  // byte position of the first violation in the frame
    std::string reason;
};

using DecodeOutcome = std::variant<Message, DecodeError>;

// Encodes the full frame including the length prefix.
std::vector<std::uint8_t> encode_message(const Message& msg);

// Decodes a full frame. Never throws on malformed input; returns the error
// position instead.
DecodeOutcome decode_message(std::span<const std::uint8_t> frame);

}  // namespace obpuf
