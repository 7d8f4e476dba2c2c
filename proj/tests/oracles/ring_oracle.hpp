/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <vector>

// Reference model of a ring all-reduce: a rank's steps are paced by the
// slower of the two links it touches, so its bus bandwidth is the minimum of
// those two links.
namespace oracle::ring
{

/// `link[i]` joins rank i and rank (i + 1) % n, in GB/s.
inline std::vector<double> per_rank_busbw(const std::vector<double> &link, double loopback)
{
    const auto n = link.size();
    if (n <= 1)
    {
        return {loopback};
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        double upstream   = link[(i + n - 1) % n];
        double downstream = link[i];
        out[i]            = upstream < downstream ? upstream : downstream;
    }
    return out;
}

/// Elementwise sum over ranks.
inline std::vector<double> reduce(const std::vector<std::vector<double>> &inputs)
{
    std::vector<double> out(inputs.front().size(), 0.0);
    for (const auto &v : inputs)
    {
        for (std::size_t j = 0; j < v.size(); ++j)
        {
            out[j] += v[j];
        }
    }
    return out;
}

} // namespace oracle::ring
