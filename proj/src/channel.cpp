#include "obpuf/channel.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <stdexcept>

namespace obpuf {

namespace {

struct FrameQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<std::uint8_t>> frames;

    void push(std::vector<std::uint8_t> f) {
        {
            std::lock_guard lock(mu);
            frames.push_back(std::move(f));
        }
        cv.notify_one();
    }
    std::vector<std::uint8_t> pop() {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !frames.empty(); });
        auto f = std::move(frames.front());
        frames.pop_front();
        return f;
    }
};

class InProcChannel final : public Channel {
public:
    InProcChannel(std::shared_ptr<FrameQueue> tx, std::shared_ptr<FrameQueue> rx)
        : tx_(std::move(tx)), rx_(std::move(rx)) {}
    void send(const std::vector<std::uint8_t>& frame) override { tx_->push(frame); }
    std::vector<std::uint8_t> recv() override { return rx_->pop(); }

private:
    std::shared_ptr<FrameQueue> tx_, rx_;
};

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
    while (len > 0) {
        const auto n = ::write(fd, data, len);
        if (n <= 0) throw std::runtime_error("socket write failed");
        data += n;
        len -= static_cast<std::size_t>(n);
    }
}

void read_all(int fd, std::uint8_t* data, std::size_t len) {
    while (len > 0) {
        const auto n = ::read(fd, data, len);
        if (n <= 0) throw std::runtime_error("socket closed mid-frame");
        data += n;
        len -= static_cast<std::size_t>(n);
    }
}

class SocketChannel final : public Channel {
public:
    explicit SocketChannel(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    ~SocketChannel() override {
        if (fd_ >= 0) ::close(fd_);
    }
    SocketChannel(const SocketChannel&) = delete;
    SocketChannel& operator=(const SocketChannel&) = delete;

    void send(const std::vector<std::uint8_t>& frame) override {
        write_all(fd_, frame.data(), frame.size());
    }

    std::vector<std::uint8_t> recv() override {
        std::uint8_t prefix[4];
        read_all(fd_, prefix, 4);
        std::uint32_t len = 0;
        for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(prefix[i]) << (8 * i);
        std::vector<std::uint8_t> frame(4 + len);
        std::memcpy(frame.data(), prefix, 4);
        read_all(fd_, frame.data() + 4, len);
        return frame;
    }

private:
    int fd_;
};

}  // namespace

ChannelPair make_inproc_pair() {
    auto q1 = std::make_shared<FrameQueue>();
    auto q2 = std::make_shared<FrameQueue>();
    ChannelPair pair;
    pair.a = std::make_unique<InProcChannel>(q1, q2);
    pair.b = std::make_unique<InProcChannel>(q2, q1);
    return pair;
}

ChannelPair make_socket_pair() {
    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) throw std::runtime_error("socket() failed");
    int one = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;  // ephemeral
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listener, 1) != 0) {
        ::close(listener);
        throw std::runtime_error("bind/listen failed");
    }
    socklen_t alen = sizeof(addr);
    ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &alen);

    const int client = ::socket(AF_INET, SOCK_STREAM, 0);
    if (client < 0) {
        ::close(listener);
        throw std::runtime_error("socket() failed");
    }
    if (::connect(client, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listener);
        ::close(client);
        throw std::runtime_error("connect failed");
    }
    const int server = ::accept(listener, nullptr, nullptr);
    ::close(listener);
    if (server < 0) {
        ::close(client);
        throw std::runtime_error("accept failed");
    }

    ChannelPair pair;
    pair.a = std::make_unique<SocketChannel>(server);
    pair.b = std::make_unique<SocketChannel>(client);
    return pair;
}

}  // namespace obpuf
