/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/codec.hpp>
#include <vetgate/executor.hpp>

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Multi-process transport: length-prefixed frames over TCP between one
// coordinator and an agent per node, plus a TCP ring for the bandwidth test.
//
// Frame: u32 length (big endian, counts everything after itself)
//        u8  version (kWireVersion)
//        u8  type    (FrameType)
//        body        (JSON for control frames, binary for RingData)
namespace vetgate::net
{

VETGATE_DEFINE_ERROR(FrameError);
VETGATE_DEFINE_ERROR(ConnectionError);

inline constexpr std::uint8_t kWireVersion    = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 256u * 1024u * 1024u;

enum class FrameType : std::uint8_t
{
    Hello  = 1, ///< agent -> coordinator: {"node", "ring_host", "ring_port"}
    Run    = 2, ///< coordinator -> agent: job, protocol text, ring members
    Report = 3, ///< agent -> coordinator: NodeReport
    Error  = 4, ///< either way: {"error"}
    RingData = 5, ///< rank -> next rank: u64 count (LE), count doubles (LE), padding
};

std::string_view to_string(FrameType type);

struct Frame
{
    FrameType type = FrameType::Error;
    std::string body;

    bool operator==(const Frame &) const = default;
};

std::string encode_frame(const Frame &frame);

/// Incremental decoder; feed bytes as they arrive. Throws FrameError on a
/// bad version, unknown type or oversized length.
class FrameDecoder
{
public:
    void feed(std::string_view bytes);
    std::optional<Frame> next();
    std::size_t buffered() const
    {
        return m_buffer.size() - m_offset;
    }

private:
    std::string m_buffer;
    std::size_t m_offset = 0;
};

using Deadline = std::chrono::steady_clock::time_point;
Deadline deadline_after(double seconds);

/// Framed, blocking TCP connection.
class Connection
{
public:
    Connection() = default;
    explicit Connection(int fd);
    ~Connection();
    Connection(Connection &&other) noexcept;
    Connection &operator=(Connection &&other) noexcept;
    Connection(const Connection &)            = delete;
    Connection &operator=(const Connection &) = delete;

    /// Retries refused connections until the deadline. Throws ConnectionError.
    static Connection connect(const std::string &host, int port, Deadline deadline);

    void send(const Frame &frame);
    /// Nothing on timeout. Throws ConnectionError on EOF.
    std::optional<Frame> receive(Deadline deadline);

    /// One non-blocking read into the decoder; false on EOF.
    bool pump();
    std::optional<Frame> pop()
    {
        return m_decoder.next();
    }

    int fd() const
    {
        return m_fd;
    }
    bool open() const
    {
        return m_fd >= 0;
    }
    /// Numeric address of the remote end.
    std::string peer_host() const;
    void close();

private:
    int m_fd = -1;
    FrameDecoder m_decoder;
};

class Listener
{
public:
    /// Port 0 picks a free port. Throws ConnectionError.
    Listener(const std::string &host, int port);
    ~Listener();
    Listener(const Listener &)            = delete;
    Listener &operator=(const Listener &) = delete;

    int port() const
    {
        return m_port;
    }
    int fd() const
    {
        return m_fd;
    }
    std::optional<Connection> accept(Deadline deadline);

private:
    int m_fd   = -1;
    int m_port = 0;
};

struct RingMember
{
    std::string node;
    std::string host;
    int port = 0;

    bool operator==(const RingMember &) const = default;
};

/// Ring rank over real sockets: connects to the next rank, accepts the
/// previous one, and times each hop with the steady clock.
class TcpRingPeer final : public ring::RingPeer
{
public:
    TcpRingPeer(int rank, std::vector<RingMember> members, Listener &listener, double wait_limit_s = 60.0);

    int rank() const override
    {
        return m_rank;
    }
    int size() const override
    {
        return static_cast<int>(m_members.size());
    }
    ring::Hop exchange(std::span<const double> data, std::uint64_t wire_bytes) override;
    double barrier(double local_ms) override
    {
        return local_ms;
    }

private:
    void connect_ring();

    int m_rank;
    std::vector<RingMember> m_members;
    Listener &m_listener;
    double m_wait_limit_s;
    Connection m_next;
    Connection m_prev;
};

std::string encode_ring_data(std::span<const double> data, std::uint64_t wire_bytes);
std::vector<double> decode_ring_data(std::string_view body);

/// Coordinator side. Agents connect in and say Hello; nodes that have not
/// done so when the connect window closes are reported Unreachable.
class TcpTransport final : public executor::AgentTransport
{
public:
    struct Options
    {
        std::string host        = "0.0.0.0";
        int port                = 0;
        double connect_window_s = 30.0;
    };

    explicit TcpTransport(Options options);
    ~TcpTransport() override;

    int port() const;

    void dispatch(const protocol::VettingProtocol &protocol, const executor::JobContext &ctx, double deadline_ms) override;
    std::optional<executor::AgentMessage> next(double deadline_ms) override;
    double now_ms() override;
    std::int64_t epoch_ms() const override;

private:
    struct Agent
    {
        std::string node;
        Connection conn;
        bool done = false;
    };

    Options m_options;
    std::unique_ptr<Listener> m_listener;
    std::chrono::steady_clock::time_point m_origin;
    std::int64_t m_epoch_ms = 0;
    std::vector<Agent> m_agents;
    std::deque<executor::AgentMessage> m_ready;
};

struct AgentOptions
{
    std::string coordinator_host = "127.0.0.1";
    int coordinator_port         = 0;
    std::string node;
    std::string ring_bind = "0.0.0.0";
    std::string advertise_host; ///< empty: the coordinator uses the connection's source address
    double connect_timeout_s = 60.0;
    double run_timeout_s     = 600.0;
    double ring_timeout_s    = 60.0;
};

/// Agent side of one vetting round: connect, wait for Run, execute the
/// protocol on this node, send the report. Returns the report sent.
/// Throws ConnectionError, FrameError or codec::DecodeError.
executor::NodeReport run_agent(const AgentOptions &options, const probe::Probe &probe, const evaluations::RequirementManifest &manifest);

// JSON bodies of the control frames.
codec::Json hello_body(const std::string &node, const std::string &ring_host, int ring_port);
codec::Json run_body(const executor::JobContext &ctx,
                     const protocol::VettingProtocol &protocol,
                     const std::vector<RingMember> &ring,
                     std::int64_t coordinator_wall_ms);

} // namespace vetgate::net
