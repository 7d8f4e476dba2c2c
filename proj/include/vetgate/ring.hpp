/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/error.hpp>

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Ring all-reduce over an abstract point-to-point link, used by the
// collective-bandwidth evaluation.
namespace vetgate::ring
{

VETGATE_DEFINE_ERROR(RingTimeout);

struct Hop
{
    std::vector<double> received;
    double seconds = 0.0; ///< time this rank spent on the hop
};

/// One rank's view of a ring. Rank r sends to (r + 1) % size and receives
/// from (r - 1 + size) % size.
class RingPeer
{
public:
    virtual ~RingPeer() = default;

    virtual int rank() const = 0;
    virtual int size() const = 0;

    /// Send `data` downstream and return what arrived from upstream.
    /// `wire_bytes` is the payload size the hop stands for; implementations
    /// may carry more than `data` on the wire to honour it. With size() == 1
    /// the hop goes over the node's loopback path. Throws RingTimeout.
    virtual Hop exchange(std::span<const double> data, std::uint64_t wire_bytes) = 0;

    /// Collective start: every rank enters with its local clock and leaves
    /// with the common start time. Real peers return `local_ms` unchanged.
    virtual double barrier(double local_ms) = 0;

    /// Seconds this rank would spend on one all-reduce of `payload_bytes`
    /// when the peer can model it without moving the data. Real peers
    /// return nothing and are measured instead.
    virtual std::optional<double> modeled_allreduce_seconds(std::uint64_t payload_bytes) const
    {
        (void)payload_bytes;
        return std::nullopt;
    }
};

struct AllReduce
{
    std::vector<double> reduced;
    double seconds = 0.0;
};

/// Reduce-scatter followed by all-gather: 2(n-1) hops of payload/n bytes.
/// `data` must hold at least size() elements.
AllReduce ring_allreduce(RingPeer &peer, std::vector<double> data, std::uint64_t payload_bytes);

/// busbw in GB/s (1e9 bytes) for an all-reduce of `payload_bytes` that took
/// `seconds` on `ranks` ranks. A single rank reports the loopback rate.
double bus_bandwidth_gbps(std::uint64_t payload_bytes, double seconds, int ranks);

/// Per-link bandwidths for simulated rings. Links are undirected.
struct LinkModel
{
    double default_gbps = 100.0;
    std::map<std::pair<std::string, std::string>, double> overrides;
    std::map<std::string, double> loopback_gbps;
    double default_loopback_gbps = 150.0;

    void set(const std::string &a, const std::string &b, double gbps);
    double bandwidth(const std::string &a, const std::string &b) const;
    double loopback(const std::string &node) const;
};

/// Rank-local seconds for one hop of `bytes` in an analytic ring: the hop is
/// bounded by the slower of the rank's inbound and outbound links.
double analytic_hop_seconds(const LinkModel &links, const std::vector<std::string> &order, int rank, double bytes);

/// Shared in-process ring whose hop times come from a LinkModel.
class InProcessRing
{
public:
    InProcessRing(std::vector<std::string> order, LinkModel links, double wait_limit_s = 30.0);
    ~InProcessRing();
    InProcessRing(const InProcessRing &)            = delete;
    InProcessRing &operator=(const InProcessRing &) = delete;

    /// Peer for `rank`; valid while the ring lives.
    RingPeer &peer(int rank);

    const std::vector<std::string> &order() const
    {
        return m_order;
    }

private:
    class Peer;
    friend class Peer;

    std::vector<std::string> m_order;
    LinkModel m_links;
    double m_wait_limit_s;

    std::mutex m_mutex;
    std::condition_variable m_barrier_cv;
    std::vector<std::deque<std::vector<double>>> m_inbox;
    std::vector<std::condition_variable> m_inbox_cv;

    std::uint64_t m_barrier_generation = 0;
    int m_barrier_waiting              = 0;
    double m_barrier_max               = 0.0;
    double m_barrier_result            = 0.0;

    std::vector<std::unique_ptr<Peer>> m_peers;
};

} // namespace vetgate::ring
