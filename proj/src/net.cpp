/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/net.hpp>
#include <vetgate/protocol.hpp>

#include <fmt/format.h>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <exception>
#include <map>
#include <set>
#include <thread>
#include <utility>

namespace vetgate::net
{

static_assert(std::endian::native == std::endian::little, "ring payloads are sent in host byte order");

namespace
{

std::string errno_text()
{
    return std::strerror(errno);
}

int remaining_ms(Deadline deadline)
{
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    return static_cast<int>(std::clamp<long long>(left, 0, 1 << 30));
}

std::int64_t wall_ms()
{
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

void set_nodelay(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

struct AddrInfo
{
    addrinfo *head = nullptr;
    ~AddrInfo()
    {
        if (head)
        {
            ::freeaddrinfo(head);
        }
    }
};

AddrInfo resolve(const std::string &host, int port, bool passive)
{
    addrinfo hints {};
    hints.ai_family   = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags    = passive ? AI_PASSIVE : 0;
    AddrInfo out;
    auto service = std::to_string(port);
    int rc       = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &out.head);
    if (rc != 0)
    {
        throw ConnectionError(fmt::format("cannot resolve '{}': {}", host, ::gai_strerror(rc)));
    }
    return out;
}

std::string error_message(const Frame &frame)
{
    try
    {
        auto j = codec::parse(frame.body);
        return j.value("error", std::string("unspecified error"));
    }
    catch (const codec::DecodeError &)
    {
        return frame.body;
    }
}

Frame json_frame(FrameType type, const codec::Json &body)
{
    return Frame {type, codec::dump(body)};
}

} // namespace

std::string_view to_string(FrameType type)
{
    switch (type)
    {
    case FrameType::Hello: return "Hello";
    case FrameType::Run: return "Run";
    case FrameType::Report: return "Report";
    case FrameType::Error: return "Error";
    case FrameType::RingData: return "RingData";
    }
    return "?";
}

std::string encode_frame(const Frame &frame)
{
    if (frame.body.size() + 2 > kMaxFrameBytes)
    {
        throw FrameError(fmt::format("frame body of {} bytes exceeds the {} byte limit", frame.body.size(), kMaxFrameBytes));
    }
    auto length = static_cast<std::uint32_t>(frame.body.size() + 2);
    std::string out;
    out.reserve(length + 4);
    for (int shift = 24; shift >= 0; shift -= 8)
    {
        out.push_back(static_cast<char>((length >> shift) & 0xff));
    }
    out.push_back(static_cast<char>(kWireVersion));
    out.push_back(static_cast<char>(frame.type));
    out += frame.body;
    return out;
}

void FrameDecoder::feed(std::string_view bytes)
{
    if (m_offset > 0 && m_offset * 2 > m_buffer.size())
    {
        m_buffer.erase(0, m_offset);
        m_offset = 0;
    }
    m_buffer.append(bytes);
}

std::optional<Frame> FrameDecoder::next()
{
    if (buffered() < 4)
    {
        return std::nullopt;
    }
    const auto *p = reinterpret_cast<const unsigned char *>(m_buffer.data() + m_offset);
    std::uint32_t length = (std::uint32_t {p[0]} << 24) | (std::uint32_t {p[1]} << 16) | (std::uint32_t {p[2]} << 8) | p[3];
    if (length < 2 || length > kMaxFrameBytes)
    {
        throw FrameError(fmt::format("invalid frame length {}", length));
    }
    if (buffered() >= 5 && p[4] != kWireVersion)
    {
        throw FrameError(fmt::format("unsupported wire version {} (expected {})", p[4], kWireVersion));
    }
    if (buffered() >= 6 && (p[5] < 1 || p[5] > 5))
    {
        throw FrameError(fmt::format("unknown frame type {}", p[5]));
    }
    if (buffered() < 4 + std::size_t {length})
    {
        return std::nullopt;
    }
    Frame f {static_cast<FrameType>(p[5]), m_buffer.substr(m_offset + 6, length - 2)};
    m_offset += 4 + length;
    if (m_offset == m_buffer.size())
    {
        m_buffer.clear();
        m_offset = 0;
    }
    return f;
}

Deadline deadline_after(double seconds)
{
    return std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds));
}

Connection::Connection(int fd)
    : m_fd(fd)
{}

Connection::~Connection()
{
    close();
}

Connection::Connection(Connection &&other) noexcept
    : m_fd(std::exchange(other.m_fd, -1))
    , m_decoder(std::move(other.m_decoder))
{}

Connection &Connection::operator=(Connection &&other) noexcept
{
    if (this != &other)
    {
        close();
        m_fd      = std::exchange(other.m_fd, -1);
        m_decoder = std::move(other.m_decoder);
    }
    return *this;
}

void Connection::close()
{
    if (m_fd >= 0)
    {
        ::close(m_fd);
        m_fd = -1;
    }
}

Connection Connection::connect(const std::string &host, int port, Deadline deadline)
{
    std::string last = "timed out";
    while (true)
    {
        auto addrs = resolve(host, port, false);
        for (auto *a = addrs.head; a; a = a->ai_next)
        {
            int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
            if (fd < 0)
            {
                last = errno_text();
                continue;
            }
            int flags = ::fcntl(fd, F_GETFL, 0);
            ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
            int rc = ::connect(fd, a->ai_addr, a->ai_addrlen);
            if (rc != 0 && errno == EINPROGRESS)
            {
                pollfd pfd {fd, POLLOUT, 0};
                rc = ::poll(&pfd, 1, std::max(remaining_ms(deadline), 1)) == 1 ? 0 : -1;
                int err       = rc == 0 ? 0 : ETIMEDOUT;
                socklen_t len = sizeof err;
                if (rc == 0)
                {
                    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                }
                errno = err;
                rc    = err == 0 ? 0 : -1;
            }
            if (rc == 0)
            {
                ::fcntl(fd, F_SETFL, flags);
                set_nodelay(fd);
                return Connection(fd);
            }
            last = errno_text();
            ::close(fd);
        }
        if (std::chrono::steady_clock::now() >= deadline)
        {
            throw ConnectionError(fmt::format("cannot connect to {}:{}: {}", host, port, last));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(std::min(50, std::max(remaining_ms(deadline), 1))));
    }
}

void Connection::send(const Frame &frame)
{
    if (m_fd < 0)
    {
        throw ConnectionError("send on a closed connection");
    }
    auto bytes       = encode_frame(frame);
    std::size_t sent = 0;
    while (sent < bytes.size())
    {
        auto n = ::send(m_fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0)
        {
            if (errno == EINTR)
            {
                continue;
            }
            throw ConnectionError(fmt::format("send failed: {}", errno_text()));
        }
        sent += static_cast<std::size_t>(n);
    }
}

bool Connection::pump()
{
    char buf[65536];
    while (true)
    {
        auto n = ::recv(m_fd, buf, sizeof buf, MSG_DONTWAIT);
        if (n > 0)
        {
            m_decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            return true;
        }
        if (n == 0)
        {
            return false;
        }
        if (errno == EINTR)
        {
            continue;
        }
        if (errno == EAGAIN || errno == EWOULDBLOCK)
        {
            return true;
        }
        throw ConnectionError(fmt::format("receive failed: {}", errno_text()));
    }
}

std::optional<Frame> Connection::receive(Deadline deadline)
{
    if (m_fd < 0)
    {
        throw ConnectionError("receive on a closed connection");
    }
    while (true)
    {
        if (auto f = m_decoder.next())
        {
            return f;
        }
        pollfd pfd {m_fd, POLLIN, 0};
        int rc = ::poll(&pfd, 1, remaining_ms(deadline));
        if (rc < 0 && errno == EINTR)
        {
            continue;
        }
        if (rc <= 0)
        {
            return std::nullopt;
        }
        if (!pump())
        {
            throw ConnectionError("connection closed by peer");
        }
    }
}

std::string Connection::peer_host() const
{
    sockaddr_storage addr {};
    socklen_t len = sizeof addr;
    if (::getpeername(m_fd, reinterpret_cast<sockaddr *>(&addr), &len) != 0)
    {
        return {};
    }
    char host[NI_MAXHOST];
    if (::getnameinfo(reinterpret_cast<sockaddr *>(&addr), len, host, sizeof host, nullptr, 0, NI_NUMERICHOST) != 0)
    {
        return {};
    }
    return host;
}

Listener::Listener(const std::string &host, int port)
{
    auto addrs = resolve(host, port, true);
    std::string last;
    for (auto *a = addrs.head; a; a = a->ai_next)
    {
        int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0)
        {
            last = errno_text();
            continue;
        }
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 512) == 0)
        {
            sockaddr_storage bound {};
            socklen_t len = sizeof bound;
            ::getsockname(fd, reinterpret_cast<sockaddr *>(&bound), &len);
            m_port = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6 *>(&bound)->sin6_port)
                                                 : ntohs(reinterpret_cast<sockaddr_in *>(&bound)->sin_port);
            m_fd = fd;
            return;
        }
        last = errno_text();
        ::close(fd);
    }
    throw ConnectionError(fmt::format("cannot listen on {}:{}: {}", host, port, last));
}

Listener::~Listener()
{
    if (m_fd >= 0)
    {
        ::close(m_fd);
    }
}

std::optional<Connection> Listener::accept(Deadline deadline)
{
    while (true)
    {
        pollfd pfd {m_fd, POLLIN, 0};
        int rc = ::poll(&pfd, 1, remaining_ms(deadline));
        if (rc < 0 && errno == EINTR)
        {
            continue;
        }
        if (rc <= 0)
        {
            return std::nullopt;
        }
        int fd = ::accept4(m_fd, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0)
        {
            if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED)
            {
                continue;
            }
            throw ConnectionError(fmt::format("accept failed: {}", errno_text()));
        }
        set_nodelay(fd);
        return Connection(fd);
    }
}

std::string encode_ring_data(std::span<const double> data, std::uint64_t wire_bytes)
{
    std::uint64_t count = data.size();
    std::size_t used    = sizeof count + data.size_bytes();
    std::size_t total   = std::max<std::size_t>(used, std::min<std::uint64_t>(wire_bytes, kMaxFrameBytes - 2));
    std::string body(total, '\0');
    std::memcpy(body.data(), &count, sizeof count);
    if (!data.empty())
    {
        std::memcpy(body.data() + sizeof count, data.data(), data.size_bytes());
    }
    return body;
}

std::vector<double> decode_ring_data(std::string_view body)
{
    std::uint64_t count = 0;
    if (body.size() < sizeof count)
    {
        throw FrameError("ring frame shorter than its header");
    }
    std::memcpy(&count, body.data(), sizeof count);
    if (count > (body.size() - sizeof count) / sizeof(double))
    {
        throw FrameError(fmt::format("ring frame claims {} values in {} bytes", count, body.size()));
    }
    std::vector<double> out(count);
    if (count > 0)
    {
        std::memcpy(out.data(), body.data() + sizeof count, count * sizeof(double));
    }
    return out;
}

TcpRingPeer::TcpRingPeer(int rank, std::vector<RingMember> members, Listener &listener, double wait_limit_s)
    : m_rank(rank)
    , m_members(std::move(members))
    , m_listener(listener)
    , m_wait_limit_s(wait_limit_s)
{
    if (rank < 0 || rank >= size())
    {
        throw PreconditionError(fmt::format("rank {} outside a ring of {}", rank, size()));
    }
}

void TcpRingPeer::connect_ring()
{
    const int n   = size();
    auto deadline = deadline_after(m_wait_limit_s);
    const auto &next = m_members[static_cast<std::size_t>((m_rank + 1) % n)];
    const auto &prev = m_members[static_cast<std::size_t>((m_rank - 1 + n) % n)];
    try
    {
        m_next = Connection::connect(next.host, next.port, deadline);
        timeval tv {static_cast<time_t>(m_wait_limit_s), 0};
        ::setsockopt(m_next.fd(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
        m_next.send(json_frame(FrameType::Hello, {{"node", m_members[static_cast<std::size_t>(m_rank)].node}}));
        while (!m_prev.open())
        {
            auto conn = m_listener.accept(deadline);
            if (!conn)
            {
                throw ring::RingTimeout(fmt::format("rank {} saw no connection from {}", m_rank, prev.node));
            }
            auto hello = conn->receive(deadline);
            if (hello && hello->type == FrameType::Hello && codec::parse(hello->body).value("node", "") == prev.node)
            {
                m_prev = std::move(*conn);
            }
        }
    }
    catch (const ConnectionError &e)
    {
        throw ring::RingTimeout(e.what());
    }
}

ring::Hop TcpRingPeer::exchange(std::span<const double> data, std::uint64_t wire_bytes)
{
    ring::Hop hop;
    auto t0 = std::chrono::steady_clock::now();
    if (size() == 1)
    {
        // Loopback: one copy of the wire payload through host memory.
        auto body = encode_ring_data(data, wire_bytes);
        std::string copy(body);
        hop.received = decode_ring_data(copy);
        hop.seconds  = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return hop;
    }
    if (!m_next.open())
    {
        connect_ring();
        t0 = std::chrono::steady_clock::now();
    }
    Frame out {FrameType::RingData, encode_ring_data(data, wire_bytes)};
    std::exception_ptr send_error;
    std::thread sender([&] {
        try
        {
            m_next.send(out);
        }
        catch (...)
        {
            send_error = std::current_exception();
        }
    });
    std::optional<Frame> in;
    std::exception_ptr recv_error;
    try
    {
        in = m_prev.receive(deadline_after(m_wait_limit_s));
    }
    catch (...)
    {
        recv_error = std::current_exception();
    }
    sender.join();
    try
    {
        if (recv_error)
        {
            std::rethrow_exception(recv_error);
        }
        if (send_error)
        {
            std::rethrow_exception(send_error);
        }
    }
    catch (const ConnectionError &e)
    {
        throw ring::RingTimeout(fmt::format("rank {}: {}", m_rank, e.what()));
    }
    if (!in || in->type != FrameType::RingData)
    {
        throw ring::RingTimeout(fmt::format("rank {} received nothing within {} s", m_rank, m_wait_limit_s));
    }
    hop.received = decode_ring_data(in->body);
    hop.seconds  = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return hop;
}

codec::Json hello_body(const std::string &node, const std::string &ring_host, int ring_port)
{
    return codec::Json {{"node", node}, {"ring_host", ring_host}, {"ring_port", ring_port}};
}

codec::Json run_body(const executor::JobContext &ctx,
                     const protocol::VettingProtocol &protocol,
                     const std::vector<RingMember> &ring,
                     std::int64_t coordinator_wall_ms)
{
    codec::Json members = codec::Json::array();
    for (const auto &m : ring)
    {
        members.push_back({{"node", m.node}, {"host", m.host}, {"port", m.port}});
    }
    return codec::Json {{"job_context", codec::encode(ctx)},
                        {"protocol", protocol::serialize_protocol(protocol)},
                        {"ring", members},
                        {"coordinator_wall_ms", coordinator_wall_ms}};
}

TcpTransport::TcpTransport(Options options)
    : m_options(std::move(options))
    , m_listener(std::make_unique<Listener>(m_options.host, m_options.port))
    , m_origin(std::chrono::steady_clock::now())
    , m_epoch_ms(wall_ms())
{}

TcpTransport::~TcpTransport() = default;

int TcpTransport::port() const
{
    return m_listener->port();
}

double TcpTransport::now_ms()
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - m_origin).count();
}

std::int64_t TcpTransport::epoch_ms() const
{
    return m_epoch_ms;
}

void TcpTransport::dispatch(const protocol::VettingProtocol &protocol, const executor::JobContext &ctx, double deadline_ms)
{
    m_agents.clear();
    m_ready.clear();
    const std::set<std::string> members(ctx.nodes.begin(), ctx.nodes.end());
    const double window = std::min(now_ms() + m_options.connect_window_s * 1000.0, deadline_ms);

    std::vector<Connection> pending;
    std::map<std::string, std::pair<Connection, RingMember>> joined;
    while (joined.size() < members.size())
    {
        double left = window - now_ms();
        if (left <= 0.0)
        {
            break;
        }
        std::vector<pollfd> fds {{m_listener->fd(), POLLIN, 0}};
        for (const auto &c : pending)
        {
            fds.push_back({c.fd(), POLLIN, 0});
        }
        int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::ceil(left)));
        if (rc <= 0)
        {
            continue;
        }
        if (fds[0].revents & POLLIN)
        {
            if (auto c = m_listener->accept(std::chrono::steady_clock::now()))
            {
                pending.push_back(std::move(*c));
            }
        }
        for (std::size_t i = 1; i < fds.size(); ++i)
        {
            if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR)))
            {
                continue;
            }
            auto &c = pending[i - 1];
            try
            {
                if (!c.pump())
                {
                    c.close();
                    continue;
                }
                auto f = c.pop();
                if (!f)
                {
                    continue;
                }
                if (f->type != FrameType::Hello)
                {
                    throw FrameError(fmt::format("expected Hello, got {}", to_string(f->type)));
                }
                auto j    = codec::parse(f->body);
                auto node = j.value("node", std::string());
                if (!members.contains(node))
                {
                    throw FrameError(fmt::format("node '{}' is not part of job {}", node, ctx.job_id));
                }
                if (joined.contains(node))
                {
                    throw FrameError(fmt::format("node '{}' already joined", node));
                }
                RingMember m {node, j.value("ring_host", std::string()), j.value("ring_port", 0)};
                if (m.host.empty())
                {
                    m.host = c.peer_host();
                }
                joined.emplace(node, std::make_pair(std::move(c), m));
            }
            catch (const Error &e)
            {
                try
                {
                    c.send(json_frame(FrameType::Error, {{"error", e.what()}}));
                }
                catch (const Error &)
                {
                }
                c.close();
            }
        }
        std::erase_if(pending, [](const Connection &c) { return !c.open(); });
    }

    std::vector<RingMember> ring;
    for (const auto &node : ctx.nodes)
    {
        if (auto it = joined.find(node); it != joined.end())
        {
            ring.push_back(it->second.second);
        }
    }
    const auto run = json_frame(FrameType::Run, run_body(ctx, protocol, ring, wall_ms()));
    const double now = now_ms();
    for (const auto &node : ctx.nodes)
    {
        auto it = joined.find(node);
        bool ok = false;
        if (it != joined.end())
        {
            try
            {
                it->second.first.send(run);
                m_agents.push_back({node, std::move(it->second.first), false});
                ok = true;
            }
            catch (const ConnectionError &)
            {
            }
        }
        if (!ok)
        {
            executor::NodeReport r;
            r.node         = node;
            r.agent_status = executor::AgentStatus::Unreachable;
            r.started_ms = r.finished_ms = m_epoch_ms + static_cast<std::int64_t>(now);
            m_ready.push_back({node, now, std::move(r)});
        }
    }
}

std::optional<executor::AgentMessage> TcpTransport::next(double deadline_ms)
{
    while (m_ready.empty())
    {
        std::vector<pollfd> fds;
        std::vector<Agent *> owners;
        for (auto &a : m_agents)
        {
            if (!a.done)
            {
                fds.push_back({a.conn.fd(), POLLIN, 0});
                owners.push_back(&a);
            }
        }
        double left = deadline_ms - now_ms();
        if (fds.empty() || left <= 0.0)
        {
            return std::nullopt;
        }
        int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::ceil(left)));
        if (rc <= 0)
        {
            continue;
        }
        const double arrival = now_ms();
        std::vector<executor::AgentMessage> batch;
        for (std::size_t i = 0; i < fds.size(); ++i)
        {
            if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR)))
            {
                continue;
            }
            auto &a = *owners[i];
            executor::NodeReport r;
            r.node         = a.node;
            r.agent_status = executor::AgentStatus::Unreachable;
            r.started_ms = r.finished_ms = m_epoch_ms + static_cast<std::int64_t>(arrival);
            try
            {
                if (a.conn.pump())
                {
                    auto f = a.conn.pop();
                    if (!f)
                    {
                        continue;
                    }
                    if (f->type == FrameType::Report)
                    {
                        r = codec::decode_node_report(codec::parse(f->body));
                    }
                }
            }
            catch (const Error &)
            {
                // A malformed or broken stream is treated like a lost agent.
            }
            a.done = true;
            a.conn.close();
            if (r.node != a.node)
            {
                r = executor::NodeReport {a.node, {}, r.started_ms, r.finished_ms, executor::AgentStatus::Unreachable};
            }
            batch.push_back({a.node, arrival, std::move(r)});
        }
        std::sort(batch.begin(), batch.end(), [](const auto &x, const auto &y) { return x.node < y.node; });
        m_ready.insert(m_ready.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
    }
    if (m_ready.front().arrival_ms > deadline_ms)
    {
        return std::nullopt;
    }
    auto msg = std::move(m_ready.front());
    m_ready.pop_front();
    return msg;
}

executor::NodeReport run_agent(const AgentOptions &options, const probe::Probe &probe, const evaluations::RequirementManifest &manifest)
{
    Listener ring_listener(options.ring_bind, 0);
    auto conn = Connection::connect(options.coordinator_host, options.coordinator_port, deadline_after(options.connect_timeout_s));
    conn.send(json_frame(FrameType::Hello, hello_body(options.node, options.advertise_host, ring_listener.port())));

    auto f = conn.receive(deadline_after(options.run_timeout_s));
    if (!f)
    {
        throw ConnectionError(fmt::format("no work from the coordinator within {} s", options.run_timeout_s));
    }
    if (f->type == FrameType::Error)
    {
        throw ConnectionError(fmt::format("coordinator refused {}: {}", options.node, error_message(*f)));
    }
    if (f->type != FrameType::Run)
    {
        throw FrameError(fmt::format("expected Run, got {}", to_string(f->type)));
    }
    auto body     = codec::parse(f->body);
    auto protocol = protocol::parse_protocol(body.at("protocol").get<std::string>());
    std::vector<RingMember> ring;
    int rank = -1;
    for (const auto &m : body.at("ring"))
    {
        if (m.at("node").get<std::string>() == options.node)
        {
            rank = static_cast<int>(ring.size());
        }
        ring.push_back({m.at("node").get<std::string>(), m.at("host").get<std::string>(), m.at("port").get<int>()});
    }
    if (rank < 0)
    {
        throw FrameError(fmt::format("{} is missing from the ring", options.node));
    }
    auto coordinator_wall = body.at("coordinator_wall_ms").get<std::int64_t>();

    TcpRingPeer peer(rank, ring, ring_listener, options.ring_timeout_s);
    evaluations::SteadyClock clock;
    auto epoch = wall_ms() - static_cast<std::int64_t>(clock.now_ms());
    evaluations::NodeEnvironment env {options.node, &probe, &manifest, &clock, &peer, (wall_ms() - coordinator_wall) / 1000.0};
    auto report = executor::run_protocol_on_node(protocol, env, epoch);
    conn.send(json_frame(FrameType::Report, codec::encode(report)));
    return report;
}

} // namespace vetgate::net
