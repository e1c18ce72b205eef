#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <vector>

namespace obpuf {

// One endpoint of a bidirectional frame transport. send() ships a complete
// frame (length prefix included); recv() blocks for the next whole frame.
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(const std::vector<std::uint8_t>& frame) = 0;
    virtual std::vector<std::uint8_t> recv() = 0;
};

struct ChannelPair {
    std::unique_ptr<Channel> a;
    std::unique_ptr<Channel> b;
};

// Two in-process queue-backed endpoints.
ChannelPair make_inproc_pair();

// Loopback TCP endpoints on an ephemeral port; the pair is connected before
// returning.
ChannelPair make_socket_pair();

}  // namespace obpuf
