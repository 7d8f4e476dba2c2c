/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/ring.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>

namespace vetgate::ring
{

namespace
{

std::pair<std::size_t, std::size_t> chunk_bounds(std::size_t length, int parts, int chunk)
{
    auto n = static_cast<std::size_t>(parts);
    auto c = static_cast<std::size_t>(chunk);
    return {c * length / n, (c + 1) * length / n};
}

int mod(int a, int n)
{
    return ((a % n) + n) % n;
}

std::pair<std::string, std::string> link_key(const std::string &a, const std::string &b)
{
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

} // namespace

AllReduce ring_allreduce(RingPeer &peer, std::vector<double> data, std::uint64_t payload_bytes)
{
    const int n = peer.size();
    const int r = peer.rank();
    AllReduce out;
    if (n == 1)
    {
        auto hop    = peer.exchange(data, payload_bytes);
        out.seconds = hop.seconds;
        out.reduced = std::move(data);
        return out;
    }
    if (data.size() < static_cast<std::size_t>(n))
    {
        throw PreconditionError(fmt::format("all-reduce over {} ranks needs at least {} elements", n, n));
    }
    const auto hop_bytes = payload_bytes / static_cast<std::uint64_t>(n);

    auto send_chunk = [&](int chunk) {
        auto [b, e] = chunk_bounds(data.size(), n, chunk);
        return peer.exchange(std::span<const double>(data.data() + b, e - b), hop_bytes);
    };
    auto check_size = [&](const Hop &hop, std::size_t b, std::size_t e) {
        if (hop.received.size() != e - b)
        {
            throw RingTimeout(fmt::format("rank {} received {} elements, expected {}", r, hop.received.size(), e - b));
        }
    };

    for (int s = 0; s < n - 1; ++s)
    {
        auto hop    = send_chunk(mod(r - s, n));
        auto [b, e] = chunk_bounds(data.size(), n, mod(r - s - 1, n));
        check_size(hop, b, e);
        for (std::size_t i = b; i < e; ++i)
        {
            data[i] += hop.received[i - b];
        }
        out.seconds += hop.seconds;
    }
    for (int s = 0; s < n - 1; ++s)
    {
        auto hop    = send_chunk(mod(r - s + 1, n));
        auto [b, e] = chunk_bounds(data.size(), n, mod(r - s, n));
        check_size(hop, b, e);
        std::copy(hop.received.begin(), hop.received.end(), data.begin() + static_cast<std::ptrdiff_t>(b));
        out.seconds += hop.seconds;
    }
    out.reduced = std::move(data);
    return out;
}

double bus_bandwidth_gbps(std::uint64_t payload_bytes, double seconds, int ranks)
{
    if (seconds <= 0.0)
    {
        return 0.0;
    }
    double algbw = static_cast<double>(payload_bytes) / seconds / 1e9;
    if (ranks <= 1)
    {
        return algbw;
    }
    return algbw * 2.0 * (ranks - 1) / ranks;
}

void LinkModel::set(const std::string &a, const std::string &b, double gbps)
{
    overrides[link_key(a, b)] = gbps;
}

double LinkModel::bandwidth(const std::string &a, const std::string &b) const
{
    auto it = overrides.find(link_key(a, b));
    return it == overrides.end() ? default_gbps : it->second;
}

double LinkModel::loopback(const std::string &node) const
{
    auto it = loopback_gbps.find(node);
    return it == loopback_gbps.end() ? default_loopback_gbps : it->second;
}

double analytic_hop_seconds(const LinkModel &links, const std::vector<std::string> &order, int rank, double bytes)
{
    const int n     = static_cast<int>(order.size());
    const auto &me  = order[static_cast<std::size_t>(rank)];
    double gbps     = 0.0;
    if (n == 1)
    {
        gbps = links.loopback(me);
    }
    else
    {
        const auto &next = order[static_cast<std::size_t>(mod(rank + 1, n))];
        const auto &prev = order[static_cast<std::size_t>(mod(rank - 1, n))];
        gbps             = std::min(links.bandwidth(me, next), links.bandwidth(prev, me));
    }
    return bytes / (gbps * 1e9);
}

class InProcessRing::Peer final : public RingPeer
{
public:
    Peer(InProcessRing &ring, int rank)
        : m_ring(ring)
        , m_rank(rank)
    {}

    int rank() const override
    {
        return m_rank;
    }

    int size() const override
    {
        return static_cast<int>(m_ring.m_order.size());
    }

    Hop exchange(std::span<const double> data, std::uint64_t wire_bytes) override
    {
        const int n = size();
        std::unique_lock lock(m_ring.m_mutex);
        auto next = static_cast<std::size_t>(mod(m_rank + 1, n));
        m_ring.m_inbox[next].emplace_back(data.begin(), data.end());
        m_ring.m_inbox_cv[next].notify_one();
        auto &mine     = m_ring.m_inbox[static_cast<std::size_t>(m_rank)];
        auto limit     = std::chrono::duration<double>(m_ring.m_wait_limit_s);
        if (!m_ring.m_inbox_cv[static_cast<std::size_t>(m_rank)].wait_for(lock, limit, [&] { return !mine.empty(); }))
        {
            throw RingTimeout(fmt::format("{} waited {} s for its upstream peer", m_ring.m_order[static_cast<std::size_t>(m_rank)],
                                          m_ring.m_wait_limit_s));
        }
        Hop hop;
        hop.received = std::move(mine.front());
        mine.pop_front();
        hop.seconds = analytic_hop_seconds(m_ring.m_links, m_ring.m_order, m_rank, static_cast<double>(wire_bytes));
        return hop;
    }

    double barrier(double local_ms) override
    {
        std::unique_lock lock(m_ring.m_mutex);
        auto generation      = m_ring.m_barrier_generation;
        m_ring.m_barrier_max = m_ring.m_barrier_waiting == 0 ? local_ms : std::max(m_ring.m_barrier_max, local_ms);
        if (++m_ring.m_barrier_waiting == size())
        {
            m_ring.m_barrier_result  = m_ring.m_barrier_max;
            m_ring.m_barrier_waiting = 0;
            ++m_ring.m_barrier_generation;
            m_ring.m_barrier_cv.notify_all();
            return m_ring.m_barrier_result;
        }
        auto limit = std::chrono::duration<double>(m_ring.m_wait_limit_s);
        if (!m_ring.m_barrier_cv.wait_for(lock, limit, [&] { return m_ring.m_barrier_generation != generation; }))
        {
            throw RingTimeout(fmt::format("{} timed out at the collective barrier", m_ring.m_order[static_cast<std::size_t>(m_rank)]));
        }
        return m_ring.m_barrier_result;
    }

    std::optional<double> modeled_allreduce_seconds(std::uint64_t payload_bytes) const override
    {
        const double n     = size();
        const auto payload = static_cast<double>(payload_bytes);
        if (size() == 1)
        {
            return analytic_hop_seconds(m_ring.m_links, m_ring.m_order, m_rank, payload);
        }
        return 2.0 * (n - 1.0) * analytic_hop_seconds(m_ring.m_links, m_ring.m_order, m_rank, payload / n);
    }

private:
    InProcessRing &m_ring;
    int m_rank;
};

InProcessRing::InProcessRing(std::vector<std::string> order, LinkModel links, double wait_limit_s)
    : m_order(std::move(order))
    , m_links(std::move(links))
    , m_wait_limit_s(wait_limit_s)
    , m_inbox(m_order.size())
    , m_inbox_cv(m_order.size())
{
    if (m_order.empty())
    {
        throw PreconditionError("a ring needs at least one rank");
    }
    for (std::size_t i = 0; i < m_order.size(); ++i)
    {
        m_peers.push_back(std::make_unique<Peer>(*this, static_cast<int>(i)));
    }
}

InProcessRing::~InProcessRing() = default;

RingPeer &InProcessRing::peer(int rank)
{
    return *m_peers.at(static_cast<std::size_t>(rank));
}

} // namespace vetgate::ring
