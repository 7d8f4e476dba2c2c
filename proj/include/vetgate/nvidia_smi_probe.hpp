/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/probe.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace vetgate::probe
{

/// One row of `nvidia-smi --query-gpu=index,temperature.gpu,memory.used,
/// memory.total,utilization.gpu --format=csv,noheader,nounits`.
struct SmiRow
{
    int index                = 0;
    double temperature_c     = 0.0;
    double memory_used_mib   = 0.0;
    double memory_total_mib  = 0.0;
    double utilization_ratio = 0.0;
};

/// Throws ProviderUnavailable on unparseable output.
std::vector<SmiRow> parse_smi_csv(std::string_view text);

/// MemAvailable / MemTotal from /proc/meminfo-formatted text.
double parse_meminfo_available(std::string_view text);

/// Best-effort provider for the local node, shelling out to nvidia-smi.
/// Serves GpuTemperature, GpuMemoryUsedFraction and GpuUtilization; other
/// fields raise FieldUnsupported. Without the tool every call raises
/// ProviderUnavailable.
class NvidiaSmiProbe final : public Probe
{
public:
    explicit NvidiaSmiProbe(std::string node, std::string command = "nvidia-smi");

    std::vector<std::string> nodes() const override;
    int gpu_count(std::string_view node) const override;
    std::vector<MetricSample> sample(const GpuGroup &group,
                                     std::span<const MetricField> fields,
                                     std::int64_t interval_ms,
                                     std::int64_t duration_ms) const override;
    NodeSnapshot snapshot(std::string_view node) const override;
    std::vector<KernelLaunch> launch_trivial_kernels(std::string_view node, double timeout_s) const override;

private:
    std::vector<SmiRow> query() const;
    void check_node(std::string_view node) const;

    std::string m_node;
    std::string m_command;
};

} // namespace vetgate::probe
