#include "obpuf/wire.hpp"

namespace obpuf {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_bits(std::vector<std::uint8_t>& out, std::span<const Bit> bits) {
    const auto packed = pack_bits(bits);
    out.insert(out.end(), packed.begin(), packed.end());
}

class Reader {
public:
    Reader(std::span<const std::uint8_t> data, std::size_t base_offset)
        : data_(data), base_(base_offset) {}

    std::size_t offset() const { return base_ + pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    bool u8(std::uint8_t& v) {
        if (remaining() < 1) return false;
        v = data_[pos_++];
        return true;
    }
    bool u16(std::uint16_t& v) {
        if (remaining() < 2) return false;
        v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
        pos_ += 2;
        return true;
    }
    bool u64(std::uint64_t& v) {
        if (remaining() < 8) return false;
        v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return true;
    }
    // nonzero pad bits are a violation; err_off reports the offending byte
    bool bits(std::size_t nbits, BitVec& out, std::size_t& err_off) {
        const std::size_t nbytes = (nbits + 7) / 8;
        if (remaining() < nbytes) return false;
        out = unpack_bits(data_.subspan(pos_, nbytes), nbits);
        if (nbits % 8 != 0) {
            const std::uint8_t last = data_[pos_ + nbytes - 1];
            const std::uint8_t mask = static_cast<std::uint8_t>(0xff << (nbits % 8));
            if (last & mask) {
                err_off = offset() + nbytes - 1;
                return false;
            }
        }
        pos_ += nbytes;
        return true;
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_message(const Message& msg) {
    std::vector<std::uint8_t> body;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SessionInitMsg>) {
                body.push_back(static_cast<std::uint8_t>(MsgKind::SessionInit));
                put_u64(body, m.session_id);
                put_u16(body, m.challenge_bits);
                put_u16(body, static_cast<std::uint16_t>(m.reconfig_challenges.size()));
                put_u16(body, m.rounds);
                for (const auto& c : m.reconfig_challenges) put_bits(body, c);
            } else if constexpr (std::is_same_v<T, ChallengeMsg>) {
                body.push_back(static_cast<std::uint8_t>(MsgKind::Challenge));
                put_u16(body, m.round);
                put_u16(body, static_cast<std::uint16_t>(m.challenge.size()));
                put_bits(body, m.challenge);
            } else if constexpr (std::is_same_v<T, ResponseMsg>) {
                body.push_back(static_cast<std::uint8_t>(MsgKind::Response));
                put_u16(body, m.round);
                put_u16(body, static_cast<std::uint16_t>(m.response.size()));
                put_bits(body, m.response);
            } else {
                body.push_back(static_cast<std::uint8_t>(MsgKind::Decision));
                body.push_back(m.accept ? 1 : 0);
                put_u16(body, m.mismatches);
            }
        },
        msg);

    std::vector<std::uint8_t> frame;
    frame.reserve(body.size() + 4);
    const auto len = static_cast<std::uint32_t>(body.size());
    for (int i = 0; i < 4; ++i) frame.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    frame.insert(frame.end(), body.begin(), body.end());
    return frame;
}

DecodeOutcome decode_message(std::span<const std::uint8_t> frame) {
    if (frame.size() < 4)
        return DecodeError{frame.size(), "frame shorter than the length prefix"};
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(frame[static_cast<std::size_t>(i)]) << (8 * i);
    if (frame.size() - 4 < len)
        return DecodeError{frame.size(), "frame truncated before declared length"};
    if (frame.size() - 4 > len)
        return DecodeError{4 + static_cast<std::size_t>(len), "trailing bytes after payload"};
    if (len == 0) return DecodeError{4, "empty payload"};

    Reader r(frame.subspan(4, len), 4);
    std::uint8_t kind = 0;
    r.u8(kind);
    std::size_t bit_err = 0;

    switch (static_cast<MsgKind>(kind)) {
        case MsgKind::SessionInit: {
            SessionInitMsg m;
            std::uint16_t count = 0;
            if (!r.u64(m.session_id) || !r.u16(m.challenge_bits) || !r.u16(count) ||
                !r.u16(m.rounds))
                return DecodeError{r.offset(), "session-init header truncated"};
            m.reconfig_challenges.resize(count);
            for (auto& c : m.reconfig_challenges) {
                bit_err = 0;
                if (!r.bits(m.challenge_bits, c, bit_err))
                    return bit_err ? DecodeError{bit_err, "nonzero padding bits"}
                                   : DecodeError{r.offset(), "challenge block truncated"};
            }
            if (r.remaining() > 0) return DecodeError{r.offset(), "unconsumed payload bytes"};
            return Message{std::move(m)};
        }
        case MsgKind::Challenge: {
            ChallengeMsg m;
            std::uint16_t bits = 0;
            if (!r.u16(m.round) || !r.u16(bits))
                return DecodeError{r.offset(), "challenge header truncated"};
            if (!r.bits(bits, m.challenge, bit_err))
                return bit_err ? DecodeError{bit_err, "nonzero padding bits"}
                               : DecodeError{r.offset(), "challenge bits truncated"};
            if (r.remaining() > 0) return DecodeError{r.offset(), "unconsumed payload bytes"};
            return Message{std::move(m)};
        }
        case MsgKind::Response: {
            ResponseMsg m;
            std::uint16_t bits = 0;
            if (!r.u16(m.round) || !r.u16(bits))
                return DecodeError{r.offset(), "response header truncated"};
            if (!r.bits(bits, m.response, bit_err))
                return bit_err ? DecodeError{bit_err, "nonzero padding bits"}
                               : DecodeError{r.offset(), "response bits truncated"};
            if (r.remaining() > 0) return DecodeError{r.offset(), "unconsumed payload bytes"};
            return Message{std::move(m)};
        }
        case MsgKind::Decision: {
            DecisionMsg m;
            std::uint8_t a = 0;
            if (!r.u8(a) || !r.u16(m.mismatches))
                return DecodeError{r.offset(), "decision body truncated"};
            if (a > 1) return DecodeError{5, "accept flag must be 0 or 1"};
            m.accept = a == 1;
            if (r.remaining() > 0) return DecodeError{r.offset(), "unconsumed payload bytes"};
            return Message{m};
        }
        default:
            return DecodeError{4, "unknown message kind"};
    }
}

}  // namespace obpuf
